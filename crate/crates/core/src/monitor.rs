//! Workload monitor: a ring of recent query records, per-table attribute
//! counters and the three classifier features.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::exec::{JoinSpec, QueryKind, Template};
use crate::storage::Predicate;

/// Default number of records kept.
pub const DEFAULT_WINDOW: usize = 100;
/// Counters are halved once every this many cycles.
pub const DECAY_PERIOD: u64 = 100;

/// How one query touched one table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableAccess {
    pub table: String,
    pub predicate: Predicate,
    pub equality: Vec<usize>,
    pub range: Vec<usize>,
    pub join: Vec<usize>,
    /// Projected or assigned attributes.
    pub other: Vec<usize>,
}

impl TableAccess {
    /// Attributes with a predicate on them, in first-appearance order.
    pub fn predicate_attrs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for c in &self.predicate.conjuncts {
            if !out.contains(&c.attr) {
                out.push(c.attr);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    /// Assigned by [`Monitor::record`].
    pub seq: u64,
    pub cycle: u64,
    pub kind: QueryKind,
    pub template: Template,
    pub tables: Vec<TableAccess>,
    pub join: Option<JoinSpec>,
    pub tuples_scanned: u64,
    pub tuples_via_index: u64,
    pub rows_written: u64,
}

/// Classifier input features.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Features {
    /// Scans per mutator, mutator count clamped to at least 1.
    pub f1: f64,
    /// Share of accessed tuples reached through an index.
    pub f2: f64,
    /// Mean tuples scanned per query.
    pub f3: f64,
}

impl Features {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a QueryRecord>) -> Self {
        let (mut scans, mut mutators, mut n) = (0u64, 0u64, 0u64);
        let (mut via, mut scanned) = (0u128, 0u128);
        for r in records {
            n += 1;
            if r.kind.is_mutator() {
                mutators += 1;
            } else {
                scans += 1;
            }
            via += r.tuples_via_index as u128;
            scanned += r.tuples_scanned as u128;
        }
        if n == 0 {
            return Features::default();
        }
        Features {
            f1: scans as f64 / mutators.max(1) as f64,
            f2: via as f64 / (via + scanned).max(1) as f64,
            f3: scanned as f64 / n as f64,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.f1, self.f2, self.f3]
    }
}

#[derive(Debug, Clone)]
pub struct WorkloadSnapshot {
    pub records: Vec<Arc<QueryRecord>>,
    pub features: Features,
}

impl WorkloadSnapshot {
    pub fn new(records: Vec<Arc<QueryRecord>>) -> Self {
        let features = Features::from_records(records.iter().map(|r| r.as_ref()));
        WorkloadSnapshot { records, features }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Whether there are at least `k_min` records to classify.
    pub fn sufficient(&self, k_min: usize) -> bool {
        self.records.len() >= k_min
    }
}

#[derive(Debug)]
struct Inner {
    ring: VecDeque<Arc<QueryRecord>>,
    capacity: usize,
    next_seq: u64,
    cycle: u64,
    last_decay: u64,
    counters: BTreeMap<(String, Vec<usize>), f64>,
}

/// Shared between the query path (writer) and the tuner (reader).
#[derive(Debug)]
pub struct Monitor {
    inner: Mutex<Inner>,
}

impl Default for Monitor {
    fn default() -> Self {
        Monitor::new(DEFAULT_WINDOW)
    }
}

impl Monitor {
    pub fn new(window: usize) -> Self {
        let capacity = window.max(1);
        Monitor {
            inner: Mutex::new(Inner {
                ring: VecDeque::with_capacity(capacity),
                capacity,
                next_seq: 0,
                cycle: 0,
                last_decay: 0,
                counters: BTreeMap::new(),
            }),
        }
    }

    pub fn window(&self) -> usize {
        self.inner.lock().capacity
    }

    /// Appends a record, evicting the oldest when full. Returns its sequence
    /// number.
    pub fn record(&self, mut rec: QueryRecord) -> u64 {
        let mut g = self.inner.lock();
        rec.seq = g.next_seq;
        rec.cycle = g.cycle;
        g.next_seq += 1;
        for t in &rec.tables {
            let mut set: Vec<usize> = t.equality.iter().chain(&t.range).copied().collect();
            set.sort_unstable();
            set.dedup();
            if !set.is_empty() {
                *g.counters.entry((t.table.clone(), set)).or_insert(0.0) += 1.0;
            }
            for j in &t.join {
                *g.counters.entry((t.table.clone(), vec![*j])).or_insert(0.0) += 1.0;
            }
        }
        if g.ring.len() == g.capacity {
            g.ring.pop_front();
        }
        let seq = rec.seq;
        g.ring.push_back(Arc::new(rec));
        seq
    }

    pub fn snapshot(&self) -> WorkloadSnapshot {
        WorkloadSnapshot::new(self.inner.lock().ring.iter().cloned().collect())
    }

    /// Buffered records with `seq >= from`.
    pub fn since(&self, from: u64) -> Vec<Arc<QueryRecord>> {
        self.inner.lock().ring.iter().filter(|r| r.seq >= from).cloned().collect()
    }

    /// Sequence number the next record will get.
    pub fn next_seq(&self) -> u64 {
        self.inner.lock().next_seq
    }

    pub fn cycle(&self) -> u64 {
        self.inner.lock().cycle
    }

    /// Sets the cycle stamped on new records and halves the counters once
    /// per [`DECAY_PERIOD`] cycles.
    pub fn set_cycle(&self, cycle: u64) {
        let mut g = self.inner.lock();
        g.cycle = cycle;
        while cycle >= g.last_decay + DECAY_PERIOD {
            g.last_decay += DECAY_PERIOD;
            for v in g.counters.values_mut() {
                *v *= 0.5;
            }
        }
    }

    /// Decayed access counter for a sorted attribute set of `table`.
    pub fn counter(&self, table: &str, attrs: &[usize]) -> f64 {
        self.inner.lock().counters.get(&(table.to_string(), attrs.to_vec())).copied().unwrap_or(0.0)
    }

    pub fn counters(&self) -> BTreeMap<(String, Vec<usize>), f64> {
        self.inner.lock().counters.clone()
    }

    pub fn clear(&self) {
        self.inner.lock().ring.clear();
    }
}
