//! Background index tuner.
//!
//! Every cycle classifies the monitored window, turns it into create and
//! drop actions under the storage budget, advances the indexes being built
//! by a bounded number of pages, and feeds realized utilities into the
//! forecaster.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{Classification, Classifier};
use crate::error::{Error, Result};
use crate::exec::{Database, QueryKind};
use crate::forecaster::{Forecaster, HwParams};
use crate::monitor::QueryRecord;
use crate::pindex::{BuildBudget, IndexKeySpec, KeyBox, PartialIndex, Scheme, DEFAULT_PAGES_PER_STEP};
use crate::planner::{
    dampen_redundant, enumerate_candidates, plan_holistic, plan_transition, CandidateIndex, CandidateState,
    CostContext, PlannerConfig, Source, TransitionPlan, DEFAULT_LAMBDA, DEFAULT_THETA,
};

/// Queries between cycles in deterministic mode.
pub const DEFAULT_EVERY: u64 = 50;
/// Statistics are refreshed at most once per this many cycles.
pub const ANALYZE_PERIOD: u64 = 10;
/// Bound on demanded intervals one VBP build step works through.
const MAX_SUBDOMAINS_PER_STEP: usize = 64;

/// How often the tuner runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frequency {
    Fast,
    Mod,
    Slow,
    Disabled,
    /// Once every `n` queries, driven by the caller.
    EveryQueries(u64),
}

impl Frequency {
    pub fn interval(self) -> Option<Duration> {
        match self {
            Frequency::Fast => Some(Duration::from_millis(100)),
            Frequency::Mod => Some(Duration::from_millis(1000)),
            Frequency::Slow => Some(Duration::from_millis(10_000)),
            Frequency::Disabled | Frequency::EveryQueries(_) => None,
        }
    }

    pub fn every_queries(self) -> Option<u64> {
        match self {
            Frequency::EveryQueries(n) => Some(n),
            _ => None,
        }
    }

    pub fn is_enabled(self) -> bool {
        self != Frequency::Disabled
    }
}

impl Default for Frequency {
    fn default() -> Self {
        Frequency::EveryQueries(DEFAULT_EVERY)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Fast => f.write_str("FAST"),
            Frequency::Mod => f.write_str("MOD"),
            Frequency::Slow => f.write_str("SLOW"),
            Frequency::Disabled => f.write_str("DIS"),
            Frequency::EveryQueries(n) => write!(f, "Q{n}"),
        }
    }
}

impl FromStr for Frequency {
    type Err = Error;

    /// `FAST`, `MOD`, `SLOW`, `DIS` or `Q<n>`.
    fn from_str(s: &str) -> Result<Self> {
        let u = s.trim().to_ascii_uppercase();
        match u.as_str() {
            "FAST" => Ok(Frequency::Fast),
            "MOD" => Ok(Frequency::Mod),
            "SLOW" => Ok(Frequency::Slow),
            "DIS" => Ok(Frequency::Disabled),
            _ => match u.strip_prefix('Q').and_then(|n| n.parse::<u64>().ok()) {
                Some(n) if n > 0 => Ok(Frequency::EveryQueries(n)),
                _ => Err(Error::InvalidParameter(format!("unknown frequency `{s}`"))),
            },
        }
    }
}

/// Which evidence the tuner acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecisionLogic {
    /// Each query since the last cycle on its own.
    Immediate,
    /// The last `k` queries.
    Retrospective(usize),
    /// The window plus forecast utilities.
    Predictive,
    /// Immediate evidence, a random admissible create per cycle, drops
    /// only on budget overflow.
    Holistic,
}

impl fmt::Display for DecisionLogic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionLogic::Immediate => f.write_str("immediate"),
            DecisionLogic::Retrospective(k) => write!(f, "retrospective:{k}"),
            DecisionLogic::Predictive => f.write_str("predictive"),
            DecisionLogic::Holistic => f.write_str("holistic"),
        }
    }
}

impl FromStr for DecisionLogic {
    type Err = Error;

    /// `immediate`, `retrospective[:k]`, `predictive` or `holistic`.
    fn from_str(s: &str) -> Result<Self> {
        let l = s.trim().to_ascii_lowercase();
        let (name, arg) = l.split_once(':').map_or((l.as_str(), None), |(a, b)| (a, Some(b)));
        match (name, arg) {
            ("immediate", None) => Ok(DecisionLogic::Immediate),
            ("predictive", None) => Ok(DecisionLogic::Predictive),
            ("holistic", None) => Ok(DecisionLogic::Holistic),
            ("retrospective", None) => Ok(DecisionLogic::Retrospective(crate::monitor::DEFAULT_WINDOW)),
            ("retrospective", Some(k)) => match k.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(DecisionLogic::Retrospective(k)),
                _ => Err(Error::InvalidParameter(format!("bad window `{k}`"))),
            },
            _ => Err(Error::InvalidParameter(format!("unknown decision logic `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunerConfig {
    pub frequency: Frequency,
    /// Storage budget in bytes.
    pub budget: u64,
    pub logic: DecisionLogic,
    pub scheme: Scheme,
    pub pages_per_step: usize,
    pub theta: usize,
    pub lambda: f64,
    /// Overrides the default base `U_min` when set. The base applies to a
    /// full monitor window and shrinks with the decision logic's window.
    pub base_u_min: Option<f64>,
    pub hw: HwParams,
    pub seed: u64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            frequency: Frequency::default(),
            budget: 256 << 20,
            logic: DecisionLogic::Predictive,
            scheme: Scheme::Vap,
            pages_per_step: DEFAULT_PAGES_PER_STEP,
            theta: DEFAULT_THETA,
            lambda: DEFAULT_LAMBDA,
            base_u_min: None,
            hw: HwParams::default(),
            seed: 0,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pages_per_step == 0 {
            return Err(Error::InvalidParameter("pages_per_step must be positive".into()));
        }
        if matches!(self.logic, DecisionLogic::Retrospective(0)) {
            return Err(Error::InvalidParameter("retrospective window must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter("lambda must lie in [0, 1]".into()));
        }
        if self.base_u_min.is_some_and(|u| !(u >= 0.0)) {
            return Err(Error::InvalidParameter("U_min must be non-negative".into()));
        }
        self.hw.validate()
    }
}

/// What one cycle did.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub cycle: u64,
    pub classification: Classification,
    pub creates: Vec<IndexKeySpec>,
    pub drops: Vec<IndexKeySpec>,
    /// Pages indexed by build steps this cycle.
    pub pages_indexed: u64,
    /// Indexes in the configuration after the cycle.
    pub indexes: usize,
    /// Complete indexes after the cycle.
    pub built: usize,
    pub u_min: f64,
    /// One-step forecasts of every tracked spec after the update.
    pub forecasts: Vec<(IndexKeySpec, f64)>,
    /// Wall-clock time spent in the cycle.
    pub elapsed_us: f64,
}

pub struct Tuner {
    db: Arc<Database>,
    config: TunerConfig,
    classifier: Classifier,
    forecaster: Forecaster,
    rng: ChaCha8Rng,
    cycle: u64,
    last_seq: u64,
    analyzed_versions: BTreeMap<String, u64>,
    skipped: u64,
}

impl fmt::Debug for Tuner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tuner").field("config", &self.config).field("cycle", &self.cycle).finish()
    }
}

impl Tuner {
    pub fn new(db: Arc<Database>, config: TunerConfig, classifier: Classifier) -> Result<Self> {
        config.validate()?;
        let forecaster = Forecaster::new(config.hw)?;
        Ok(Tuner {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            last_seq: db.monitor().next_seq(),
            db,
            config,
            classifier,
            forecaster,
            cycle: 0,
            analyzed_versions: BTreeMap::new(),
            skipped: 0,
        })
    }

    pub fn config(&self) -> &TunerConfig {
        &self.config
    }

    pub fn database(&self) -> &Arc<Database> {
        &self.db
    }

    pub fn forecaster(&self) -> &Forecaster {
        &self.forecaster
    }

    /// Cycles completed so far.
    pub fn cycles(&self) -> u64 {
        self.cycle
    }

    /// Wall-clock ticks skipped because a cycle overran.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Queries the decision logic scores utilities over.
    fn logic_window(&self) -> usize {
        let window = self.db.monitor().window();
        match self.config.logic {
            DecisionLogic::Immediate | DecisionLogic::Holistic => 1,
            DecisionLogic::Retrospective(k) => k.min(window),
            DecisionLogic::Predictive => window,
        }
    }

    fn planner_config(&self) -> PlannerConfig {
        let window = self.db.monitor().window();
        let mut p = PlannerConfig::new(
            self.config.budget,
            self.db.tables().first().map_or(crate::storage::DEFAULT_PAGE_CAPACITY, |t| t.page_capacity()),
            window,
        );
        p.theta = self.config.theta;
        p.lambda = self.config.lambda;
        p.pages_per_step = self.config.pages_per_step;
        if let Some(u) = self.config.base_u_min {
            p.base_u_min = u;
        }
        p.base_u_min *= self.logic_window() as f64 / window.max(1) as f64;
        p
    }

    fn refresh_stats(&mut self) -> Result<()> {
        if self.cycle % ANALYZE_PERIOD != 0 {
            return Ok(());
        }
        for t in self.db.tables() {
            let v = t.version_count();
            if self.analyzed_versions.get(t.name()) != Some(&v) {
                self.db.analyze(t.name())?;
                self.analyzed_versions.insert(t.name().to_string(), v);
            }
        }
        Ok(())
    }

    /// Cycles an index needs to finish building at the current rate.
    fn lead_time(&self, spec: &IndexKeySpec) -> usize {
        let pages = self.db.table(&spec.table).map_or(0, |t| t.page_count());
        pages.div_ceil(self.config.pages_per_step).clamp(1, self.config.hw.m)
    }

    /// Largest forecast over the build lead time.
    fn lookahead(&self, spec: &IndexKeySpec) -> Option<f64> {
        let h = self.lead_time(spec);
        (1..=h).filter_map(|h| self.forecaster.forecast(spec, h)).reduce(f64::max)
    }

    /// Runs one tuning cycle.
    pub fn cycle(&mut self) -> Result<CycleReport> {
        let start = Instant::now();
        self.cycle += 1;
        self.db.monitor().set_cycle(self.cycle);
        self.refresh_stats()?;
        let pcfg = self.planner_config();

        // Stage I: classification
        let snapshot = self.db.monitor().snapshot();
        let class = self.classifier.classify(&snapshot);

        // Stage II: action generation
        let ctx = CostContext::capture(&self.db);
        let window: Vec<&QueryRecord> = match self.config.logic {
            DecisionLogic::Retrospective(k) => {
                let skip = snapshot.records.len().saturating_sub(k);
                snapshot.records[skip..].iter().map(|r| r.as_ref()).collect()
            }
            _ => snapshot.records.iter().map(|r| r.as_ref()).collect(),
        };
        let delta: Vec<&QueryRecord> =
            snapshot.records.iter().filter(|r| r.seq >= self.last_seq).map(|r| r.as_ref()).collect();
        self.last_seq = self.db.monitor().next_seq();

        let immediate = matches!(self.config.logic, DecisionLogic::Immediate | DecisionLogic::Holistic);
        let plan = if immediate && delta.is_empty() {
            None
        } else {
            Some(self.generate(&ctx, &window, &delta, class, &pcfg))
        };
        let (creates, drops) = match &plan {
            Some(p) => self.apply(p)?,
            None => (Vec::new(), Vec::new()),
        };
        let pages_indexed = self.build_steps()?;

        // Stage III: forecaster update
        let ctx = CostContext::capture(&self.db);
        let mut tracked: BTreeSet<IndexKeySpec> = self.forecaster.specs().cloned().collect();
        tracked.extend(self.db.indexes().specs());
        for spec in &tracked {
            let u = ctx.overall_utility(spec, self.config.scheme, &window);
            self.forecaster.observe(spec, u);
        }
        let forecasts = tracked.iter().filter_map(|s| self.forecaster.forecast(s, 1).map(|f| (s.clone(), f))).collect();

        let indexes = self.db.indexes().snapshot();
        let built = indexes
            .iter()
            .filter(|i| self.db.table(&i.spec().table).is_ok_and(|t| i.is_complete(&t)))
            .count();
        Ok(CycleReport {
            cycle: self.cycle,
            classification: class,
            creates,
            drops,
            pages_indexed,
            indexes: indexes.len(),
            built,
            u_min: plan.as_ref().map_or(pcfg.u_min(class), |p| p.u_min),
            forecasts,
            elapsed_us: start.elapsed().as_secs_f64() * 1e6,
        })
    }

    /// Scores existing indexes and new candidates and plans the transition.
    fn generate(
        &mut self,
        ctx: &CostContext,
        window: &[&QueryRecord],
        delta: &[&QueryRecord],
        class: Classification,
        pcfg: &PlannerConfig,
    ) -> TransitionPlan {
        let scheme = self.config.scheme;
        let immediate = matches!(self.config.logic, DecisionLogic::Immediate | DecisionLogic::Holistic);
        let existing: Vec<Arc<PartialIndex>> = self.db.indexes().snapshot();
        let existing_specs: BTreeSet<IndexKeySpec> = existing.iter().map(|i| i.spec().clone()).collect();
        let schemas: Vec<_> = ctx.schemas().cloned().collect();

        // utility of a spec under the active logic
        let utility = |spec: &IndexKeySpec| -> f64 {
            if immediate {
                delta.iter().map(|r| ctx.overall_utility(spec, scheme, &[*r])).fold(0.0, f64::max)
            } else {
                ctx.overall_utility(spec, scheme, window)
            }
        };

        let mut fresh: BTreeSet<IndexKeySpec> = BTreeSet::new();
        if immediate {
            for r in delta {
                fresh.extend(enumerate_candidates([*r], schemas.iter().map(|s| s.as_ref()), &existing_specs, 1));
            }
        } else {
            fresh.extend(enumerate_candidates(
                window.iter().copied(),
                schemas.iter().map(|s| s.as_ref()),
                &existing_specs,
                pcfg.theta,
            ));
        }
        let predictive = self.config.logic == DecisionLogic::Predictive;
        if predictive {
            fresh.extend(self.forecaster.specs().filter(|s| !existing_specs.contains(*s)).cloned());
        }

        let mut items = Vec::new();
        for ix in &existing {
            let spec = ix.spec().clone();
            let mut u = utility(&spec);
            let mut source = Source::NewCandidate;
            if predictive {
                if let Some(f) = self.lookahead(&spec).filter(|f| *f > u) {
                    u = f;
                    source = Source::Forecasted;
                }
            }
            let complete = self.db.table(&spec.table).is_ok_and(|t| ix.is_complete(&t));
            let protected = window.iter().any(|r| {
                r.kind == QueryKind::Update
                    && r.tables.first().is_some_and(|a| {
                        a.table == spec.table && KeyBox::for_predicate(ix.attrs(), &a.predicate).is_some()
                    })
            });
            items.push(CandidateIndex {
                spec: spec.clone(),
                state: if complete { CandidateState::Built } else { CandidateState::Building },
                utility: u.max(0.0),
                footprint: ctx.footprint_estimate(&spec).max(1),
                source,
                protected,
            });
        }
        let mut news = Vec::new();
        for spec in fresh {
            let mut u = utility(&spec);
            let mut source = Source::NewCandidate;
            if predictive {
                if let Some(f) = self.lookahead(&spec).filter(|f| *f > u) {
                    u = f;
                    source = Source::Forecasted;
                }
            }
            let footprint = ctx.footprint_estimate(&spec);
            if footprint == 0 {
                continue;
            }
            news.push(CandidateIndex { source, ..CandidateIndex::new(spec, u, footprint) });
        }
        let existing_list: Vec<IndexKeySpec> = existing_specs.iter().cloned().collect();
        dampen_redundant(&mut news, &existing_list, pcfg.lambda);
        items.extend(news);

        if self.config.logic == DecisionLogic::Holistic {
            let pick = self.rng.random_range(0..u32::MAX) as usize;
            plan_holistic(&items, class, pcfg, pick)
        } else {
            plan_transition(&items, class, pcfg)
        }
    }

    fn apply(&mut self, plan: &TransitionPlan) -> Result<(Vec<IndexKeySpec>, Vec<IndexKeySpec>)> {
        let mut drops = Vec::new();
        for spec in &plan.drops {
            if self.db.indexes().drop_index(spec) {
                self.forecaster.retire(spec);
                drops.push(spec.clone());
            }
        }
        let mut creates = Vec::new();
        for spec in &plan.creates {
            if self.db.indexes().contains(spec) {
                continue;
            }
            self.db.create_index(spec.clone(), self.config.scheme)?;
            creates.push(spec.clone());
        }
        Ok((creates, drops))
    }

    /// Advances every incomplete VAP or FULL index by at most
    /// `pages_per_step` pages, and every VBP index by as many entries as
    /// that many full pages hold.
    fn build_steps(&mut self) -> Result<u64> {
        let budget = BuildBudget::pages(self.config.pages_per_step)?;
        let mut pages = 0u64;
        for ix in self.db.indexes().snapshot() {
            let table = self.db.table(&ix.spec().table)?;
            match ix.scheme() {
                Scheme::Vap | Scheme::Full => {
                    if !ix.is_complete(&table) {
                        pages += ix.build_step(&table, budget)?.pages_indexed as u64;
                    }
                }
                Scheme::Vbp => {
                    // same entry volume a VAP step adds, spent on demanded intervals
                    let mut left = self.config.pages_per_step * table.page_capacity();
                    for _ in 0..MAX_SUBDOMAINS_PER_STEP {
                        let Some(range) = ix.next_subdomain() else { break };
                        let p = ix.build_subdomain_step(&table, range, BuildBudget::new(usize::MAX, left)?)?;
                        pages += p.pages_scanned as u64;
                        left = left.saturating_sub(p.entries_added);
                        if !p.complete || left == 0 {
                            break;
                        }
                    }
                }
            }
        }
        Ok(pages)
    }

    /// Drops every index, e.g. at the end of a workload phase.
    pub fn drop_all(&mut self) -> Vec<IndexKeySpec> {
        let dropped = self.db.indexes().clear();
        for s in &dropped {
            self.forecaster.retire(s);
        }
        dropped
    }
}

/// Runs a tuner on its own thread at a fixed interval. A tick that comes
/// due while a cycle is still running is skipped rather than queued.
pub struct TunerThread {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<(Tuner, Vec<CycleReport>)>,
}

impl TunerThread {
    pub fn spawn(mut tuner: Tuner, interval: Duration) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::spawn(move || {
            let mut reports = Vec::new();
            let mut next = Instant::now() + interval;
            while !flag.load(Ordering::Acquire) {
                let now = Instant::now();
                if now < next {
                    std::thread::sleep((next - now).min(Duration::from_millis(5)));
                    continue;
                }
                if let Ok(r) = tuner.cycle() {
                    reports.push(r);
                }
                next += interval;
                while next <= Instant::now() {
                    tuner.skipped += 1;
                    next += interval;
                }
            }
            (tuner, reports)
        });
        TunerThread { stop, handle }
    }

    /// Stops after the current cycle and returns the tuner and its reports.
    pub fn stop(self) -> (Tuner, Vec<CycleReport>) {
        self.stop.store(true, Ordering::Release);
        self.handle.join().expect("tuner thread panicked")
    }
}

#[cfg(test)]
mod tests;
