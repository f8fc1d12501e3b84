//! Read/write workload classifier: a CART decision tree over the three
//! monitor features, plus a minimum-sample guard.
//!
//! Trees print as `split f<i> <threshold> ( <left> ) ( <right> )` or
//! `leaf <label>`, with 1-based feature numbers. Internal nodes send
//! `feature < threshold` to the left child.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monitor::WorkloadSnapshot;

/// Default minimum number of records before a window is classified.
pub const DEFAULT_K_MIN: usize = 20;
const FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    ReadIntensive,
    WriteIntensive,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::ReadIntensive => "ReadIntensive",
            Label::WriteIntensive => "WriteIntensive",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ReadIntensive" => Ok(Label::ReadIntensive),
            "WriteIntensive" => Ok(Label::WriteIntensive),
            _ => Err(Error::TreeParse(format!("unknown label `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    ReadIntensive,
    WriteIntensive,
    Insufficient,
}

impl From<Label> for Classification {
    fn from(l: Label) -> Self {
        match l {
            Label::ReadIntensive => Classification::ReadIntensive,
            Label::WriteIntensive => Classification::WriteIntensive,
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::ReadIntensive => "ReadIntensive",
            Classification::WriteIntensive => "WriteIntensive",
            Classification::Insufficient => "Insufficient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSnapshot {
    pub features: [f64; FEATURES],
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        label: Label,
        /// Share of training samples in this leaf with `label`.
        purity: f64,
    },
    Split {
        /// 0-based feature index.
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// `f1 >= 2.0` means read-intensive.
    pub fn fallback() -> Self {
        TreeNode::Split {
            feature: 0,
            threshold: 2.0,
            left: Box::new(TreeNode::Leaf { label: Label::WriteIntensive, purity: 1.0 }),
            right: Box::new(TreeNode::Leaf { label: Label::ReadIntensive, purity: 1.0 }),
        }
    }

    pub fn predict(&self, x: &[f64; FEATURES]) -> Label {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { label, .. } => return *label,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

impl fmt::Display for TreeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeNode::Leaf { label, .. } => write!(f, "leaf {label}"),
            TreeNode::Split { feature, threshold, left, right } => {
                write!(f, "split f{} {threshold} ( {left} ) ( {right} )", feature + 1)
            }
        }
    }
}

impl FromStr for TreeNode {
    type Err = Error;

    /// Parses the text form. Leaf purity is not part of it and reads as 1.
    fn from_str(s: &str) -> Result<Self> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        let mut pos = 0;
        let node = parse_node(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::TreeParse(format!("trailing input at token {pos}")));
        }
        Ok(node)
    }
}

fn parse_node(t: &[&str], pos: &mut usize) -> Result<TreeNode> {
    let mut next = |what: &str| -> Result<&str> {
        let tok = t.get(*pos).copied().ok_or_else(|| Error::TreeParse(format!("expected {what}, got end of input")))?;
        *pos += 1;
        Ok(tok)
    };
    match next("`leaf` or `split`")? {
        "leaf" => Ok(TreeNode::Leaf { label: next("label")?.parse()?, purity: 1.0 }),
        "split" => {
            let f = next("feature")?;
            let feature = f
                .strip_prefix('f')
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|n| (1..=FEATURES).contains(n))
                .ok_or_else(|| Error::TreeParse(format!("bad feature `{f}`")))?
                - 1;
            let th = next("threshold")?;
            let threshold: f64 =
                th.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::TreeParse(format!("bad threshold `{th}`")))?;
            let mut children = Vec::with_capacity(2);
            for _ in 0..2 {
                expect(t, pos, "(")?;
                children.push(Box::new(parse_node(t, pos)?));
                expect(t, pos, ")")?;
            }
            let right = children.pop().expect("two children");
            let left = children.pop().expect("two children");
            Ok(TreeNode::Split { feature, threshold, left, right })
        }
        other => Err(Error::TreeParse(format!("unexpected token `{other}`"))),
    }
}

fn expect(t: &[&str], pos: &mut usize, want: &str) -> Result<()> {
    match t.get(*pos) {
        Some(tok) if *tok == want => {
            *pos += 1;
            Ok(())
        }
        other => Err(Error::TreeParse(format!("expected `{want}`, got {other:?}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { max_depth: 4, min_leaf: 5 }
    }
}

/// Gini impurity of a two-class node.
pub fn gini(read: usize, write: usize) -> f64 {
    let n = (read + write) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p, q) = (read as f64 / n, write as f64 / n);
    1.0 - p * p - q * q
}

fn counts(samples: &[&LabeledSnapshot]) -> (usize, usize) {
    let r = samples.iter().filter(|s| s.label == Label::ReadIntensive).count();
    (r, samples.len() - r)
}

/// Best split as `(feature, threshold, impurity decrease)`, scanning
/// midpoints of sorted distinct values. Gains within 1e-12 tie; ties keep
/// the lower feature, then the lower threshold.
pub fn best_split(samples: &[&LabeledSnapshot], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let n = samples.len();
    let (r, w) = counts(samples);
    let parent = gini(r, w);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..FEATURES {
        let mut sorted: Vec<&LabeledSnapshot> = samples.to_vec();
        sorted.sort_by(|a, b| a.features[f].total_cmp(&b.features[f]));
        let (mut lr, mut lw) = (0usize, 0usize);
        for i in 0..n - 1 {
            match sorted[i].label {
                Label::ReadIntensive => lr += 1,
                Label::WriteIntensive => lw += 1,
            }
            let (a, b) = (sorted[i].features[f], sorted[i + 1].features[f]);
            if a == b {
                continue;
            }
            let nl = i + 1;
            if nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let weighted = (nl as f64 * gini(lr, lw) + (n - nl) as f64 * gini(r - lr, w - lw)) / n as f64;
            let gain = parent - weighted;
            if best.map_or(true, |(_, _, g)| gain > g + 1e-12) {
                best = Some((f, a + (b - a) / 2.0, gain));
            }
        }
    }
    best
}

fn leaf(samples: &[&LabeledSnapshot]) -> TreeNode {
    let (r, w) = counts(samples);
    let label = if r >= w { Label::ReadIntensive } else { Label::WriteIntensive };
    TreeNode::Leaf { label, purity: r.max(w) as f64 / (r + w).max(1) as f64 }
}

fn grow(samples: &[&LabeledSnapshot], depth: usize, p: TrainParams) -> TreeNode {
    let (r, w) = counts(samples);
    if depth >= p.max_depth || r == 0 || w == 0 {
        return leaf(samples);
    }
    match best_split(samples, p.min_leaf.max(1)) {
        Some((feature, threshold, gain)) if gain > 1e-12 => {
            let (left, right): (Vec<&LabeledSnapshot>, Vec<&LabeledSnapshot>) =
                samples.iter().partition(|s| s.features[feature] < threshold);
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(grow(&left, depth + 1, p)),
                right: Box::new(grow(&right, depth + 1, p)),
            }
        }
        _ => leaf(samples),
    }
}

/// Trains a tree by greedy Gini splits, pruned by depth and leaf size.
pub fn train_cart(samples: &[LabeledSnapshot], params: TrainParams) -> Result<TreeNode> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no training samples".into()));
    }
    if samples.iter().any(|s| s.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidParameter("non-finite feature value".into()));
    }
    let refs: Vec<&LabeledSnapshot> = samples.iter().collect();
    Ok(grow(&refs, 0, params))
}

/// A tree plus the minimum window size it will classify.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub tree: TreeNode,
    pub k_min: usize,
}

impl Default for Classifier {
    fn default() -> Self {
        Classifier { tree: TreeNode::fallback(), k_min: DEFAULT_K_MIN }
    }
}

impl Classifier {
    pub fn new(tree: TreeNode, k_min: usize) -> Self {
        Classifier { tree, k_min }
    }

    pub fn classify(&self, snapshot: &WorkloadSnapshot) -> Classification {
        if !snapshot.sufficient(self.k_min) {
            return Classification::Insufficient;
        }
        self.tree.predict(&snapshot.features.as_array()).into()
    }
}
