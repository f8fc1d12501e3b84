//! Analytic cost model and access-path selection.
//!
//! Costs are in abstract units where examining one tuple in a table scan
//! costs 1.

use std::cmp::Ordering;
use std::fmt;

use super::histogram::Histogram;
use super::query::JoinSpec;
use crate::pindex::{IndexKeySpec, IntervalSet, KeyBox, KeyRange, Scheme};
use crate::storage::Predicate;

/// Random-access penalty of fetching a tuple through an index.
pub const KAPPA: f64 = 2.0;
/// Per-attribute selectivity assumed when no histogram exists.
pub const DEFAULT_SELECTIVITY: f64 = 0.1;

pub fn table_scan_cost(n: f64) -> f64 {
    n
}

pub fn index_scan_cost(n: f64, s: f64) -> f64 {
    n.max(2.0).log2() + KAPPA * s * n
}

/// Linear interpolation between an index scan over the indexed fraction
/// `w` of the table and a table scan over the rest.
pub fn hybrid_scan_cost(n: f64, s: f64, w: f64) -> f64 {
    let w = w.clamp(0.0, 1.0);
    w * index_scan_cost(n, s) + (1.0 - w) * table_scan_cost(n)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AccessPath {
    TableScan,
    /// Index phase over pages `<= ρ_i`, table scan over the rest.
    HybridScan(IndexKeySpec),
    /// Sub-domain index: index-only when the range is covered, otherwise a
    /// table scan that also registers (or populates) the range.
    VbpScan(IndexKeySpec),
    IndexScanFull(IndexKeySpec),
}

impl AccessPath {
    /// Tie-break order, simplest first.
    fn rank(&self) -> u8 {
        match self {
            AccessPath::TableScan => 0,
            AccessPath::HybridScan(_) => 1,
            AccessPath::VbpScan(_) => 2,
            AccessPath::IndexScanFull(_) => 3,
        }
    }

    pub fn spec(&self) -> Option<&IndexKeySpec> {
        match self {
            AccessPath::TableScan => None,
            AccessPath::HybridScan(s) | AccessPath::VbpScan(s) | AccessPath::IndexScanFull(s) => Some(s),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AccessPath::TableScan => "TableScan",
            AccessPath::HybridScan(_) => "HybridScan",
            AccessPath::VbpScan(_) => "VbpScan",
            AccessPath::IndexScanFull(_) => "IndexScanFull",
        }
    }
}

impl fmt::Display for AccessPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.spec() {
            Some(s) => write!(f, "{}({s})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// Cost of `path` for a table of `n` versions, selectivity `s` and indexed
/// fraction `w`.
pub fn estimate_cost(path: &AccessPath, n: f64, s: f64, w: f64) -> f64 {
    match path {
        AccessPath::TableScan => table_scan_cost(n),
        AccessPath::HybridScan(_) => hybrid_scan_cost(n, s, w),
        AccessPath::VbpScan(_) | AccessPath::IndexScanFull(_) => index_scan_cost(n, s),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JoinStrategy {
    Hash,
    IndexNestedLoop(IndexKeySpec),
}

impl JoinStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            JoinStrategy::Hash => "HashJoin",
            JoinStrategy::IndexNestedLoop(_) => "IndexNestedLoop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub paths: Vec<AccessPath>,
    pub join: Option<JoinStrategy>,
    pub cost: f64,
}

impl Plan {
    pub fn table_scans(tables: usize) -> Self {
        Plan {
            paths: vec![AccessPath::TableScan; tables],
            join: (tables == 2).then_some(JoinStrategy::Hash),
            cost: 0.0,
        }
    }

    /// Short label for reporting, e.g. `HybridScan` or
    /// `TableScan+IndexNestedLoop`.
    pub fn label(&self) -> String {
        let mut s = self.paths.first().map_or("None", |p| p.name()).to_string();
        if let Some(j) = &self.join {
            s.push('+');
            s.push_str(j.name());
        }
        s
    }
}

/// Optimizer statistics for one table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableStats {
    /// Stored versions, i.e. what a table scan examines.
    pub versions: f64,
    /// Per attribute, built from the visible tuples.
    pub histograms: Vec<Option<Histogram>>,
}

impl TableStats {
    /// Selectivity of the conjuncts on `attrs` (all conjuncts when `None`),
    /// assuming independent attributes.
    pub fn selectivity(&self, pred: &Predicate, attrs: Option<&[usize]>) -> f64 {
        let mut seen = Vec::new();
        let mut s = 1.0;
        for c in &pred.conjuncts {
            if attrs.is_some_and(|a| !a.contains(&c.attr)) || seen.contains(&c.attr) {
                continue;
            }
            seen.push(c.attr);
            let (lo, hi) = pred.bounds(c.attr).expect("attribute has a conjunct");
            s *= match self.histograms.get(c.attr).and_then(Option::as_ref) {
                Some(h) => h.selectivity(lo, hi),
                None if lo > hi => 0.0,
                None => DEFAULT_SELECTIVITY,
            };
        }
        s
    }

    pub fn equality_selectivity(&self, attr: usize) -> f64 {
        self.histograms.get(attr).and_then(Option::as_ref).map_or(DEFAULT_SELECTIVITY, |h| h.equality_selectivity())
    }
}

/// Planner-facing state of one index.
#[derive(Debug, Clone)]
pub struct IndexView {
    pub spec: IndexKeySpec,
    pub attrs: Vec<usize>,
    pub scheme: Scheme,
    /// Fraction of pages indexed (VAP/FULL).
    pub fraction: f64,
    /// Every stored version is indexed.
    pub complete: bool,
    /// Completed sub-domains (VBP).
    pub subdomains: IntervalSet,
}

impl IndexView {
    /// View of `spec` as if it were completely built.
    pub fn hypothetical(spec: IndexKeySpec, attrs: Vec<usize>, scheme: Scheme) -> Self {
        IndexView { spec, attrs, scheme, fraction: 1.0, complete: true, subdomains: IntervalSet::new() }
    }

    fn covers(&self, r: &KeyRange) -> bool {
        self.complete || self.subdomains.covers(r)
    }
}

/// Chosen path for one table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanChoice {
    pub path: AccessPath,
    pub cost: f64,
}

fn better(a: (&AccessPath, f64), b: (&AccessPath, f64)) -> bool {
    match a.1.total_cmp(&b.1) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => (a.0.rank(), a.0.spec()) < (b.0.rank(), b.0.spec()),
    }
}

/// Cheapest applicable access path for `pred`.
pub fn choose_access_path(stats: &TableStats, pred: &Predicate, indexes: &[IndexView]) -> ScanChoice {
    let n = stats.versions;
    let mut best = ScanChoice { path: AccessPath::TableScan, cost: table_scan_cost(n) };
    let mut demand: Option<(f64, IndexKeySpec)> = None;
    for ix in indexes {
        let Some(kb) = KeyBox::for_predicate(&ix.attrs, pred) else { continue };
        let s = stats.selectivity(pred, Some(&ix.attrs));
        let (path, cost) = match ix.scheme {
            Scheme::Vap => (AccessPath::HybridScan(ix.spec.clone()), hybrid_scan_cost(n, s, ix.fraction)),
            Scheme::Full if ix.complete => (AccessPath::IndexScanFull(ix.spec.clone()), index_scan_cost(n, s)),
            Scheme::Full => continue,
            Scheme::Vbp => {
                let cost = index_scan_cost(n, s);
                let covered = kb.range().is_some_and(|r| ix.covers(&r));
                if !covered {
                    if cost < n && demand.as_ref().map_or(true, |(c, sp)| (cost, &ix.spec) < (*c, sp)) {
                        demand = Some((cost, ix.spec.clone()));
                    }
                    continue;
                }
                (AccessPath::VbpScan(ix.spec.clone()), cost)
            }
        };
        if better((&path, cost), (&best.path, best.cost)) {
            best = ScanChoice { path, cost };
        }
    }
    if best.path == AccessPath::TableScan {
        if let Some((_, spec)) = demand {
            best.path = AccessPath::VbpScan(spec);
        }
    }
    best
}

/// Everything needed to cost one table of a query.
#[derive(Debug, Clone, Copy)]
pub struct TableInput<'a> {
    pub stats: &'a TableStats,
    pub predicate: &'a Predicate,
    pub indexes: &'a [IndexView],
}

/// Plans a one-table scan or a two-table join.
pub fn plan_query(tables: &[TableInput<'_>], join: Option<JoinSpec>) -> Plan {
    let choices: Vec<ScanChoice> =
        tables.iter().map(|t| choose_access_path(t.stats, t.predicate, t.indexes)).collect();
    let (Some(j), [left, right]) = (join, tables) else {
        return Plan {
            cost: choices.iter().map(|c| c.cost).sum(),
            paths: choices.into_iter().map(|c| c.path).collect(),
            join: None,
        };
    };
    let outer_rows = left.stats.selectivity(left.predicate, None) * left.stats.versions;
    let inner_rows = right.stats.selectivity(right.predicate, None) * right.stats.versions;
    let hash = choices[0].cost + choices[1].cost + outer_rows + inner_rows;
    let n_in = right.stats.versions;
    let per_probe = n_in.max(2.0).log2() + KAPPA * n_in * right.stats.equality_selectivity(j.right);
    let mut best = (JoinStrategy::Hash, hash);
    for ix in right.indexes {
        let usable = ix.complete && ix.scheme != Scheme::Vbp && ix.attrs.first() == Some(&j.right);
        let cost = choices[0].cost + outer_rows * per_probe;
        if usable && cost < best.1 {
            best = (JoinStrategy::IndexNestedLoop(ix.spec.clone()), cost);
        }
    }
    let paths = match &best.0 {
        JoinStrategy::Hash => choices.into_iter().map(|c| c.path).collect(),
        JoinStrategy::IndexNestedLoop(_) => vec![choices[0].path.clone(), AccessPath::TableScan],
    };
    Plan { paths, join: Some(best.0), cost: best.1 }
}
