//! Query templates and predicate placement.
//!
//! Intervals are placed in probability-mass space: a start is drawn, then
//! the interval grows until it holds the target share of the Zipf
//! distribution. Starts are restricted to values whose own mass is at most
//! a fifth of the target so no single hot value overshoots it.

use rand::Rng;
use tidemark::exec::{JoinSpec, Query, SetClause, SetValue, TableQuery, Template};
use tidemark::storage::{Conjunct, Predicate, Value};

use crate::config::BenchConfig;
use crate::data::{DOMAIN, EPOCH_BASE, FACT_TABLE, JOIN_TABLE};

/// Largest single-value mass a start may have, relative to the target.
const START_MASS: f64 = 0.2;
/// Value set by the const assignments of HIGH-U.
const SET_CONST: Value = 7;

/// Cumulative Zipf distribution over `[1, n]`.
#[derive(Debug, Clone)]
pub struct ZipfCdf {
    /// `prefix[k] = P(X <= k)`, `prefix[0] = 0`.
    prefix: Vec<f64>,
}

impl ZipfCdf {
    pub fn new(n: u64, skew: f64) -> Self {
        let mut prefix = Vec::with_capacity(n as usize + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for k in 1..=n {
            acc += (k as f64).powf(-skew);
            prefix.push(acc);
        }
        for v in &mut prefix {
            *v /= acc;
        }
        ZipfCdf { prefix }
    }

    pub fn n(&self) -> u64 {
        self.prefix.len() as u64 - 1
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.prefix[k as usize] - self.prefix[k as usize - 1]
    }

    /// `P(lo <= X <= hi)`.
    pub fn mass(&self, lo: u64, hi: u64) -> f64 {
        self.prefix[hi as usize] - self.prefix[lo as usize - 1]
    }

    /// Smallest `k` with `P(X <= k) > u`.
    pub fn quantile(&self, u: f64) -> u64 {
        (self.prefix.partition_point(|&c| c <= u) as u64).clamp(1, self.n())
    }

    /// Smallest value whose mass is at most `START_MASS * sel`.
    pub fn min_start(&self, sel: f64) -> u64 {
        let cap = START_MASS * sel;
        let (mut lo, mut hi) = (1u64, self.n());
        while lo < hi {
            let mid = (lo + hi) / 2;
            // the pmf is non-increasing
            if self.pmf(mid) <= cap {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    /// Interval starting at `lo` holding at least `sel` of the mass, or
    /// running to the end of the domain.
    pub fn interval_from(&self, lo: u64, sel: f64) -> (u64, u64) {
        let target = self.prefix[lo as usize - 1] + sel;
        let hi = (self.prefix.partition_point(|&c| c < target) as u64).clamp(lo, self.n());
        (lo, hi)
    }

    /// Range of start masses for intervals of `sel`.
    pub fn start_span(&self, sel: f64) -> (f64, f64) {
        let lo = self.prefix[self.min_start(sel) as usize - 1];
        (lo, (1.0 - sel).max(lo))
    }
}

/// Builds queries for one configuration.
#[derive(Debug, Clone)]
pub struct QueryGen {
    cdf: ZipfCdf,
    p: usize,
    selectivity: f64,
    update_selectivity: f64,
    projection: usize,
    insert_batch: usize,
    /// Start masses of the affinity sub-domains.
    centers: Vec<f64>,
    next_timestamp: Value,
}

impl QueryGen {
    pub fn new<R: Rng>(cfg: &BenchConfig, rng: &mut R) -> Self {
        let cdf = ZipfCdf::new(DOMAIN, cfg.skew);
        let p = cfg.width.attributes();
        let (lo, hi) = cdf.start_span(cfg.selectivity);
        // leave room for the jitter on either side
        let (lo, hi) = (lo + cfg.selectivity, (hi - cfg.selectivity).max(lo + cfg.selectivity));
        let centers = (0..cfg.affinity).map(|_| rng.random_range(lo..=hi)).collect();
        QueryGen {
            cdf,
            p,
            selectivity: cfg.selectivity,
            update_selectivity: cfg.update_selectivity,
            projection: ((cfg.projectivity * p as f64).round() as usize).clamp(1, p),
            insert_batch: cfg.insert_batch,
            centers,
            next_timestamp: EPOCH_BASE + cfg.scale as Value,
        }
    }

    pub fn cdf(&self) -> &ZipfCdf {
        &self.cdf
    }

    pub fn attributes(&self) -> usize {
        self.p
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Attributes `a1..ak` projected by scans.
    pub fn projection(&self) -> Vec<usize> {
        (1..=self.projection).collect()
    }

    /// An interval of mass `sel` drawn at random, or around one of the
    /// affinity centers for scans.
    pub fn interval<R: Rng>(&self, sel: f64, scan: bool, rng: &mut R) -> (Value, Value) {
        let u = if scan && !self.centers.is_empty() {
            let c = self.centers[rng.random_range(0..self.centers.len())];
            c + rng.random_range(-self.selectivity..=self.selectivity)
        } else {
            let (lo, hi) = self.cdf.start_span(sel);
            rng.random_range(lo..=hi)
        };
        let lo = self.cdf.quantile(u).max(self.cdf.min_start(sel));
        let (lo, hi) = self.cdf.interval_from(lo, sel);
        (lo as Value, hi as Value)
    }

    fn conjunct<R: Rng>(&self, attr: usize, sel: f64, scan: bool, rng: &mut R) -> Conjunct {
        let (lo, hi) = self.interval(sel, scan, rng);
        Conjunct::new(attr, lo, hi)
    }

    /// Selectivity split of a two-attribute predicate: the first attribute
    /// carries `min(1, 2s)`, the second the rest.
    pub fn split(sel: f64) -> (f64, f64) {
        let s1 = (2.0 * sel).min(1.0);
        (s1, (sel / s1).min(1.0))
    }

    /// One query of `template` over `attrs`, which lists the predicate
    /// attributes (one for LOW-S/LOW-U, two for the rest).
    pub fn query<R: Rng>(&mut self, template: Template, attrs: &[usize], rng: &mut R) -> Query {
        let sel = self.selectivity;
        match template {
            Template::LowS => {
                let pred = Predicate::new(vec![self.conjunct(attrs[0], sel, true, rng)]);
                Query::scan(template, FACT_TABLE, pred, self.projection())
            }
            Template::ModS => {
                let (s1, s2) = Self::split(sel);
                let pred = Predicate::new(vec![
                    self.conjunct(attrs[0], s1, true, rng),
                    self.conjunct(attrs[1], s2, false, rng),
                ]);
                Query::scan(template, FACT_TABLE, pred, self.projection())
            }
            Template::HighS => {
                let left = Predicate::new(vec![self.conjunct(attrs[0], sel, true, rng)]);
                let right = Predicate::new(vec![self.conjunct(attrs[0], sel, false, rng)]);
                let join = JoinSpec { left: attrs[1], right: attrs[1] };
                Query::join(
                    TableQuery::new(FACT_TABLE, left),
                    TableQuery::new(JOIN_TABLE, right),
                    join,
                    self.projection(),
                    vec![attrs[1]],
                )
            }
            Template::LowU => {
                let pred = Predicate::new(vec![self.conjunct(attrs[0], self.update_selectivity, false, rng)]);
                Query::update(template, FACT_TABLE, pred, vec![SetClause { attr: self.p, value: SetValue::Increment }])
            }
            Template::HighU => {
                let (s1, s2) = Self::split(self.update_selectivity);
                let pred = Predicate::new(vec![
                    self.conjunct(attrs[0], s1, false, rng),
                    self.conjunct(attrs[1], s2, false, rng),
                ]);
                let first = self.p + 1 - self.projection.min(self.p - 1).max(1);
                let mut sets: Vec<SetClause> =
                    (first..self.p).map(|a| SetClause { attr: a, value: SetValue::Const(SET_CONST) }).collect();
                sets.push(SetClause { attr: self.p, value: SetValue::Increment });
                Query::update(template, FACT_TABLE, pred, sets)
            }
            Template::Ins => {
                let rows = (0..self.insert_batch)
                    .map(|_| {
                        let mut row = Vec::with_capacity(self.p + 1);
                        row.push(self.next_timestamp);
                        self.next_timestamp += 1;
                        row.extend((0..self.p).map(|_| self.cdf.quantile(rng.random::<f64>()) as Value));
                        row
                    })
                    .collect();
                Query::insert(FACT_TABLE, rows)
            }
        }
    }
}

/// Predicate attributes a template needs.
pub fn arity(template: Template) -> usize {
    match template {
        Template::LowS | Template::LowU | Template::Ins => 1,
        Template::ModS | Template::HighS | Template::HighU => 2,
    }
}
