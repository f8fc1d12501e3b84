//! Action generation: candidate utilities, redundancy dampening, the index
//! knapsack and amortized transition plans.

mod candidates;
pub mod knapsack;
mod utility;

use std::collections::BTreeSet;
use std::fmt;

use crate::classifier::Classification;
use crate::pindex::{IndexKeySpec, DEFAULT_PAGES_PER_STEP};

pub use candidates::{enumerate_candidates, DEFAULT_THETA};
pub use utility::{maintenance_cost_per_entry, CostContext, TableContext};

/// Utility multiplier for redundant candidates.
pub const DEFAULT_LAMBDA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CandidateState {
    Proposed,
    Building,
    Built,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    /// Utility bootstrapped from the current window.
    NewCandidate,
    /// Utility taken from the forecaster.
    Forecasted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateIndex {
    pub spec: IndexKeySpec,
    pub state: CandidateState,
    pub utility: f64,
    /// Estimated bytes once fully built.
    pub footprint: u64,
    pub source: Source,
    /// Kept even when not selected, e.g. serving UPDATE predicates.
    pub protected: bool,
}

impl CandidateIndex {
    pub fn new(spec: IndexKeySpec, utility: f64, footprint: u64) -> Self {
        CandidateIndex {
            spec,
            state: CandidateState::Proposed,
            utility: utility.max(0.0),
            footprint: footprint.max(1),
            source: Source::NewCandidate,
            protected: false,
        }
    }

    pub fn exists(&self) -> bool {
        matches!(self.state, CandidateState::Building | CandidateState::Built)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    /// Storage budget in bytes.
    pub budget: u64,
    pub theta: usize,
    pub lambda: f64,
    /// Unscaled minimum utility for an index to be kept or created.
    pub base_u_min: f64,
    pub write_scale: f64,
    pub read_scale: f64,
    pub pages_per_step: usize,
}

impl PlannerConfig {
    /// Defaults for a window of `window` queries over pages of
    /// `page_capacity` tuples.
    pub fn new(budget: u64, page_capacity: usize, window: usize) -> Self {
        PlannerConfig {
            budget,
            theta: DEFAULT_THETA,
            lambda: DEFAULT_LAMBDA,
            base_u_min: page_capacity as f64 * window as f64 * 0.01,
            write_scale: 2.0,
            read_scale: 0.5,
            pages_per_step: DEFAULT_PAGES_PER_STEP,
        }
    }

    pub fn u_min(&self, class: Classification) -> f64 {
        match class {
            Classification::WriteIntensive => self.base_u_min * self.write_scale,
            Classification::ReadIntensive => self.base_u_min * self.read_scale,
            Classification::Insufficient => self.base_u_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPlan {
    pub creates: Vec<IndexKeySpec>,
    pub drops: Vec<IndexKeySpec>,
    /// Pages each building index may index this cycle.
    pub pages_per_step: usize,
    pub u_min: f64,
    /// Estimated footprint of the configuration once the plan is applied.
    pub footprint: u64,
}

impl TransitionPlan {
    pub fn is_empty(&self) -> bool {
        self.creates.is_empty() && self.drops.is_empty()
    }
}

impl fmt::Display for TransitionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[IndexKeySpec]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
        write!(f, "create [{}] drop [{}]", join(&self.creates), join(&self.drops))
    }
}

fn same_set(a: &IndexKeySpec, b: &IndexKeySpec) -> bool {
    let sa: BTreeSet<&String> = a.attributes.iter().collect();
    let sb: BTreeSet<&String> = b.attributes.iter().collect();
    a.table == b.table && a != b && sa == sb
}

/// Multiplies by `lambda` the utility of every candidate whose key is a
/// proper prefix of another candidate or existing index, or a permutation
/// of one. Among permutations the one with the higher utility (then the
/// smaller spec) keeps its utility; an existing permutation always wins.
pub fn dampen_redundant(candidates: &mut [CandidateIndex], existing: &[IndexKeySpec], lambda: f64) {
    let before: Vec<(IndexKeySpec, f64)> = candidates.iter().map(|c| (c.spec.clone(), c.utility)).collect();
    for (c, (_, mine)) in candidates.iter_mut().zip(&before) {
        let prefix = before.iter().map(|(s, _)| s).chain(existing).any(|o| c.spec.is_prefix_of(o));
        let loses_permutation = existing.iter().any(|o| same_set(&c.spec, o))
            || before.iter().any(|(o, u)| same_set(&c.spec, o) && (u > mine || (u == mine && o < &c.spec)));
        if prefix || loses_permutation {
            c.utility *= lambda;
        }
    }
}

/// Decides creates and drops for one cycle.
///
/// Existing indexes are those in `Building` or `Built` state. Protected
/// existing indexes are kept while they fit the budget. Every other index
/// below the scaled `U_min` is excluded, and the knapsack picks among the
/// rest. Unselected existing indexes are dropped one per cycle, lowest
/// utility first, plus as many more as needed to get back under budget.
/// Selected new indexes are created in descending utility while they fit.
pub fn plan_transition(items: &[CandidateIndex], class: Classification, cfg: &PlannerConfig) -> TransitionPlan {
    let u_min = cfg.u_min(class);
    let by_utility = |v: &mut Vec<usize>| {
        v.sort_by(|a, b| items[*b].utility.total_cmp(&items[*a].utility).then(items[*a].spec.cmp(&items[*b].spec)))
    };
    let mut protected: Vec<usize> = (0..items.len()).filter(|i| items[*i].exists() && items[*i].protected).collect();
    by_utility(&mut protected);
    let mut keep = BTreeSet::new();
    let mut used = 0u64;
    for i in protected {
        if used + items[i].footprint <= cfg.budget {
            used += items[i].footprint;
            keep.insert(i);
        }
    }
    let pool: Vec<usize> = (0..items.len()).filter(|i| !keep.contains(i) && items[*i].utility >= u_min).collect();
    let ks: Vec<knapsack::Item> =
        pool.iter().map(|&i| knapsack::Item { utility: items[i].utility, size: items[i].footprint }).collect();
    let selected: BTreeSet<usize> =
        knapsack::solve(&ks, cfg.budget - used).into_iter().map(|k| pool[k]).chain(keep.iter().copied()).collect();

    let mut unselected: Vec<usize> =
        (0..items.len()).filter(|i| items[*i].exists() && !selected.contains(i)).collect();
    // lowest utility first
    by_utility(&mut unselected);
    unselected.reverse();
    let mut existing: u64 = (0..items.len()).filter(|i| items[*i].exists()).map(|i| items[i].footprint).sum();
    let mut drops = Vec::new();
    for (n, &i) in unselected.iter().enumerate() {
        if n == 0 || existing > cfg.budget {
            existing -= items[i].footprint;
            drops.push(items[i].spec.clone());
        }
    }
    // a protected index that no longer fits can still be over budget
    let mut leftover: Vec<usize> = keep.iter().copied().collect();
    by_utility(&mut leftover);
    while existing > cfg.budget {
        let Some(i) = leftover.pop() else { break };
        existing -= items[i].footprint;
        drops.push(items[i].spec.clone());
    }

    let mut fresh: Vec<usize> = selected.iter().copied().filter(|i| !items[*i].exists()).collect();
    by_utility(&mut fresh);
    let mut creates = Vec::new();
    for i in fresh {
        if existing + items[i].footprint <= cfg.budget {
            existing += items[i].footprint;
            creates.push(items[i].spec.clone());
        }
    }
    TransitionPlan { creates, drops, pages_per_step: cfg.pages_per_step, u_min, footprint: existing }
}

/// Holistic baseline: creates one admissible new candidate picked by
/// `pick` (an index into the admissible list, taken modulo its length) and
/// drops only to get back under budget.
pub fn plan_holistic(items: &[CandidateIndex], class: Classification, cfg: &PlannerConfig, pick: usize) -> TransitionPlan {
    let u_min = cfg.u_min(class);
    let mut existing: u64 = items.iter().filter(|c| c.exists()).map(|c| c.footprint).sum();
    let mut held: Vec<&CandidateIndex> = items.iter().filter(|c| c.exists()).collect();
    held.sort_by(|a, b| a.utility.total_cmp(&b.utility).then(a.spec.cmp(&b.spec)));
    let mut drops = Vec::new();
    for c in held {
        if existing <= cfg.budget {
            break;
        }
        existing -= c.footprint;
        drops.push(c.spec.clone());
    }
    let admissible: Vec<&CandidateIndex> = items
        .iter()
        .filter(|c| !c.exists() && c.utility >= u_min && existing + c.footprint <= cfg.budget)
        .collect();
    let mut creates = Vec::new();
    if !admissible.is_empty() {
        let c = admissible[pick % admissible.len()];
        existing += c.footprint;
        creates.push(c.spec.clone());
    }
    TransitionPlan { creates, drops, pages_per_step: cfg.pages_per_step, u_min, footprint: existing }
}
