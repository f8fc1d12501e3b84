//! Runs a workload against a fresh database and collects metrics.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use sha2::{Digest, Sha256};
use tidemark::classifier::{Classifier, TreeNode, DEFAULT_K_MIN};
use tidemark::exec::{Database, Query, QueryKind, QueryOutput, Template};
use tidemark::pindex::{PartialIndex, Scheme};
use tidemark::storage::{Predicate, Table};
use tidemark::tuner::{CycleReport, Tuner, TunerThread};

use crate::config::BenchConfig;
use crate::data::generate_data;
use crate::workload::{generate_workload, Workload};
use crate::BenchError;

pub const LATENCY_HEADER: [&str; 5] = ["query_idx", "template", "latency_us", "access_path", "tuples_scanned"];
pub const SUMMARY_HEADER: [&str; 6] = ["config_hash", "cumulative_us", "queries", "scheme", "dl", "frequency"];
pub const CYCLE_HEADER: [&str; 9] =
    ["cycle", "query_idx", "classification", "creates", "drops", "pages_indexed", "indexes", "built", "u_min"];
pub const PROGRESS_HEADER: [&str; 4] = ["query_idx", "spec", "scheme", "completion"];
pub const FORECAST_HEADER: [&str; 3] = ["cycle", "spec", "forecast"];

/// Wall-clock mode samples build progress this often.
const SAMPLE_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub query_idx: usize,
    pub template: Template,
    pub latency_us: f64,
    pub access_path: String,
    pub tuples_scanned: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRow {
    /// Queries executed before the cycle; unknown in wall-clock mode.
    pub query_idx: Option<usize>,
    pub report: CycleReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressRow {
    pub query_idx: usize,
    pub spec: String,
    pub scheme: Scheme,
    pub completion: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunMetrics {
    pub latencies: Vec<LatencyRow>,
    pub cycles: Vec<CycleRow>,
    pub progress: Vec<ProgressRow>,
    pub cumulative_us: f64,
    /// SHA-256 of every query's output, in order.
    pub result_digests: Vec<String>,
    /// SHA-256 of the final table contents.
    pub storage_digest: String,
    /// Completion of every index left at the end.
    pub final_completion: Vec<(String, f64)>,
}

impl RunMetrics {
    /// Cumulative latency of queries in `range`.
    pub fn time_of(&self, range: std::ops::Range<usize>) -> f64 {
        self.latencies[range].iter().map(|r| r.latency_us).sum()
    }
}

/// Share of `ix` that is indexed: pages below the watermark for VAP and
/// FULL, entries per stored version for VBP.
pub fn completion(ix: &PartialIndex, table: &Table) -> f64 {
    match ix.scheme() {
        Scheme::Vbp => ix.entry_count() as f64 / table.version_count().max(1) as f64,
        _ if ix.is_complete(table) => 1.0,
        _ => (ix.watermark() + 1) as f64 / table.page_count().max(1) as f64,
    }
}

fn digest(text: impl AsRef<[u8]>) -> String {
    Sha256::digest(text.as_ref()).iter().map(|b| format!("{b:02x}")).collect()
}

fn output_digest(out: &QueryOutput) -> String {
    digest(format!("{out:?}"))
}

fn storage_digest(db: &Database) -> tidemark::Result<String> {
    let mut text = String::new();
    for t in db.tables() {
        let all: Vec<usize> = (0..t.schema().arity()).collect();
        let out = db.execute_reference(&Query::scan(Template::LowS, t.name(), Predicate::all(), all))?;
        text.push_str(&format!("{}={out:?};", t.name()));
    }
    Ok(digest(text))
}

pub fn classifier(cfg: &BenchConfig) -> Classifier {
    let tree = cfg
        .classifier_tree
        .as_deref()
        .map(|t| t.parse::<TreeNode>().expect("validated with the configuration"))
        .unwrap_or_else(TreeNode::fallback);
    Classifier::new(tree, DEFAULT_K_MIN)
}

struct Recorder {
    metrics: RunMetrics,
    verify: bool,
}

impl Recorder {
    fn execute(&mut self, db: &Database, idx: usize, q: &Query) -> Result<(), BenchError> {
        let (out, stats) = db.execute(q)?;
        if self.verify && q.kind() == QueryKind::Scan && db.execute_reference(q)? != out {
            return Err(BenchError::Mismatch(idx));
        }
        self.metrics.cumulative_us += stats.latency_us;
        self.metrics.result_digests.push(output_digest(&out));
        self.metrics.latencies.push(LatencyRow {
            query_idx: idx,
            template: q.template,
            latency_us: stats.latency_us,
            access_path: stats.access_path,
            tuples_scanned: stats.tuples_scanned,
        });
        Ok(())
    }

    fn sample(&mut self, db: &Database, idx: usize) {
        for ix in db.indexes().snapshot() {
            let Ok(t) = db.table(&ix.spec().table) else { continue };
            self.metrics.progress.push(ProgressRow {
                query_idx: idx,
                spec: ix.spec().to_string(),
                scheme: ix.scheme(),
                completion: completion(&ix, &t),
            });
        }
    }

    fn cycle(&mut self, tuner: &mut Tuner, idx: usize) -> Result<(), BenchError> {
        let report = tuner.cycle()?;
        self.metrics.cycles.push(CycleRow { query_idx: Some(idx), report });
        self.sample(tuner.database(), idx);
        Ok(())
    }

    fn finish(mut self, db: &Database) -> Result<RunMetrics, BenchError> {
        self.metrics.storage_digest = storage_digest(db)?;
        for ix in db.indexes().snapshot() {
            let t = db.table(&ix.spec().table)?;
            self.metrics.final_completion.push((ix.spec().to_string(), completion(&ix, &t)));
        }
        Ok(self.metrics)
    }
}

fn run_deterministic(
    cfg: &BenchConfig,
    db: &Arc<Database>,
    w: &Workload,
    every: usize,
    rec: &mut Recorder,
) -> Result<(), BenchError> {
    let mut tuner = Tuner::new(db.clone(), cfg.tuner_config(), classifier(cfg))?;
    for (ph, phase) in w.phases.iter().enumerate() {
        for _ in 0..cfg.idle_cycles {
            rec.cycle(&mut tuner, phase.start)?;
        }
        let end = w.phases.get(ph + 1).map_or(w.len(), |n| n.start);
        for idx in phase.start..end {
            if idx > 0 && idx % every == 0 {
                rec.cycle(&mut tuner, idx)?;
            }
            rec.execute(db, idx, &w.items[idx].query)?;
        }
        if cfg.drop_at_phase_end {
            tuner.drop_all();
        }
    }
    Ok(())
}

fn run_wall_clock(
    cfg: &BenchConfig,
    db: &Arc<Database>,
    w: &Workload,
    interval: Duration,
    rec: &mut Recorder,
) -> Result<(), BenchError> {
    let tuner = Tuner::new(db.clone(), cfg.tuner_config(), classifier(cfg))?;
    let mut thread = TunerThread::spawn(tuner, interval);
    let collect = |reports: Vec<CycleReport>, rec: &mut Recorder| {
        rec.metrics.cycles.extend(reports.into_iter().map(|report| CycleRow { query_idx: None, report }));
    };
    for (ph, phase) in w.phases.iter().enumerate() {
        if cfg.idle_ms > 0 {
            std::thread::sleep(Duration::from_millis(cfg.idle_ms));
        }
        let end = w.phases.get(ph + 1).map_or(w.len(), |n| n.start);
        for idx in phase.start..end {
            if idx % SAMPLE_EVERY == 0 {
                rec.sample(db, idx);
            }
            rec.execute(db, idx, &w.items[idx].query)?;
        }
        if cfg.drop_at_phase_end {
            let (mut tuner, reports) = thread.stop();
            collect(reports, rec);
            tuner.drop_all();
            thread = TunerThread::spawn(tuner, interval);
        }
    }
    let (_, reports) = thread.stop();
    collect(reports, rec);
    Ok(())
}

/// One run over a freshly generated database.
pub fn run_once(cfg: &BenchConfig, w: &Workload) -> Result<RunMetrics, BenchError> {
    let db = generate_data(cfg)?;
    let mut rec = Recorder { metrics: RunMetrics::default(), verify: cfg.verify };
    if cfg.frequency.is_enabled() {
        match (cfg.frequency.every_queries(), cfg.frequency.interval()) {
            (Some(n), _) => run_deterministic(cfg, &db, w, n.max(1) as usize, &mut rec)?,
            (None, Some(d)) => run_wall_clock(cfg, &db, w, d, &mut rec)?,
            (None, None) => unreachable!("an enabled frequency has a period"),
        }
    } else {
        // the tuner exists but never runs
        let _idle = Tuner::new(db.clone(), cfg.tuner_config(), classifier(cfg))?;
        for (idx, item) in w.items.iter().enumerate() {
            rec.execute(&db, idx, &item.query)?;
        }
    }
    rec.finish(&db)
}

/// The workload without any tuner, planner or monitor on the scan path:
/// scans run as plain table scans.
pub fn run_bare(cfg: &BenchConfig, w: &Workload) -> Result<RunMetrics, BenchError> {
    let db = generate_data(cfg)?;
    let mut m = RunMetrics::default();
    for item in &w.items {
        let q = &item.query;
        let out = if q.kind() == QueryKind::Scan { db.execute_reference(q)? } else { db.execute(q)?.0 };
        m.result_digests.push(output_digest(&out));
    }
    m.storage_digest = storage_digest(&db)?;
    Ok(m)
}

/// Runs `cfg.repeat` times and averages latencies; everything else comes
/// from the first run.
pub fn run(cfg: &BenchConfig) -> Result<RunMetrics, BenchError> {
    cfg.validate()?;
    let w = generate_workload(cfg);
    let mut first = run_once(cfg, &w)?;
    if cfg.repeat > 1 {
        let mut sums: Vec<f64> = first.latencies.iter().map(|r| r.latency_us).collect();
        for _ in 1..cfg.repeat {
            let m = run_once(cfg, &w)?;
            for (s, r) in sums.iter_mut().zip(&m.latencies) {
                *s += r.latency_us;
            }
        }
        let n = cfg.repeat as f64;
        for (r, s) in first.latencies.iter_mut().zip(sums) {
            r.latency_us = s / n;
        }
        first.cumulative_us = first.latencies.iter().map(|r| r.latency_us).sum();
    }
    Ok(first)
}

fn writer(path: &Path) -> Result<csv::Writer<File>, BenchError> {
    Ok(csv::Writer::from_path(path)?)
}

pub fn write_latency(path: &Path, m: &RunMetrics) -> Result<(), BenchError> {
    let mut w = writer(path)?;
    w.write_record(LATENCY_HEADER)?;
    for r in &m.latencies {
        w.write_record([
            r.query_idx.to_string(),
            r.template.to_string(),
            format!("{:.3}", r.latency_us),
            r.access_path.clone(),
            r.tuples_scanned.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_record(cfg: &BenchConfig, m: &RunMetrics) -> [String; 6] {
    [
        cfg.hash(),
        format!("{:.3}", m.cumulative_us),
        m.latencies.len().to_string(),
        cfg.scheme.to_string(),
        cfg.dl.to_string(),
        cfg.frequency.to_string(),
    ]
}

pub fn write_summary<'a>(
    path: &Path,
    runs: impl IntoIterator<Item = (&'a BenchConfig, &'a RunMetrics)>,
) -> Result<(), BenchError> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for (cfg, m) in runs {
        w.write_record(summary_record(cfg, m))?;
    }
    w.flush()?;
    Ok(())
}

fn specs(v: &[tidemark::pindex::IndexKeySpec]) -> String {
    v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_cycles(path: &Path, m: &RunMetrics) -> Result<(), BenchError> {
    let mut w = writer(path)?;
    w.write_record(CYCLE_HEADER)?;
    for c in &m.cycles {
        let r = &c.report;
        w.write_record([
            r.cycle.to_string(),
            c.query_idx.map_or(String::new(), |i| i.to_string()),
            r.classification.to_string(),
            specs(&r.creates),
            specs(&r.drops),
            r.pages_indexed.to_string(),
            r.indexes.to_string(),
            r.built.to_string(),
            format!("{:.3}", r.u_min),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_progress(path: &Path, m: &RunMetrics) -> Result<(), BenchError> {
    let mut w = writer(path)?;
    w.write_record(PROGRESS_HEADER)?;
    for p in &m.progress {
        w.write_record([p.query_idx.to_string(), p.spec.clone(), p.scheme.to_string(), format!("{:.6}", p.completion)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_forecasts(path: &Path, m: &RunMetrics) -> Result<(), BenchError> {
    let mut w = writer(path)?;
    w.write_record(FORECAST_HEADER)?;
    for c in &m.cycles {
        for (spec, f) in &c.report.forecasts {
            w.write_record([c.report.cycle.to_string(), spec.to_string(), format!("{f:.6}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes every CSV of a run into `dir`.
pub fn write_run(dir: &Path, cfg: &BenchConfig, m: &RunMetrics) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    write_latency(&dir.join("latency.csv"), m)?;
    write_summary(&dir.join("summary.csv"), [(cfg, m)])?;
    write_cycles(&dir.join("cycles.csv"), m)?;
    write_progress(&dir.join("progress.csv"), m)?;
    write_forecasts(&dir.join("forecasts.csv"), m)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tidemark::tuner::{DecisionLogic, Frequency};

    fn small() -> BenchConfig {
        BenchConfig {
            scale: 20_000,
            queries: 400,
            phase_length: 200,
            templates: vec![Template::LowS],
            frequency: Frequency::EveryQueries(25),
            pages_per_step: 5,
            page_capacity: 500,
            verify: true,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn tuned_run_matches_the_reference_and_builds() {
        let cfg = small();
        let m = run(&cfg).unwrap();
        assert_eq!(m.latencies.len(), 400);
        assert_eq!(m.cycles.len(), 15);
        assert!(m.cycles.iter().any(|c| !c.report.creates.is_empty()));
        assert!(m.latencies.iter().any(|r| r.access_path != "TableScan"));
        assert!(!m.progress.is_empty());
        let bare = run_bare(&cfg, &generate_workload(&cfg)).unwrap();
        assert_eq!(bare.result_digests, m.result_digests);
        assert_eq!(bare.storage_digest, m.storage_digest);
    }

    #[test]
    fn disabled_run_has_no_cycles_or_progress() {
        let cfg = BenchConfig { frequency: Frequency::Disabled, ..small() };
        let m = run(&cfg).unwrap();
        assert!(m.cycles.is_empty() && m.progress.is_empty() && m.final_completion.is_empty());
        assert!(m.latencies.iter().all(|r| r.access_path == "TableScan"));
    }

    #[test]
    fn drop_at_phase_end_and_idle_cycles() {
        let cfg = BenchConfig { drop_at_phase_end: true, idle_cycles: 2, dl: DecisionLogic::Retrospective(50), ..small() };
        let m = run(&cfg).unwrap();
        assert_eq!(m.cycles.len(), 15 + 4);
        assert_eq!(m.cycles[0].query_idx, Some(0));
        assert!(m.final_completion.is_empty());
    }

    #[test]
    fn wall_clock_mode_runs_cycles() {
        let cfg = BenchConfig { frequency: Frequency::Fast, drop_at_phase_end: true, ..small() };
        let m = run(&cfg).unwrap();
        assert_eq!(m.latencies.len(), 400);
        assert!(m.cycles.iter().all(|c| c.query_idx.is_none()));
    }

    #[test]
    fn repeat_averages_latency() {
        let cfg = BenchConfig { repeat: 2, queries: 200, ..small() };
        let m = run(&cfg).unwrap();
        let total: f64 = m.latencies.iter().map(|r| r.latency_us).sum();
        assert!((total - m.cumulative_us).abs() < 1e-6 * total);
    }

    #[test]
    fn csv_headers_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = BenchConfig { queries: 50, phase_length: 50, ..small() };
        let m = run(&cfg).unwrap();
        write_run(dir.path(), &cfg, &m).unwrap();
        let first = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap().lines().next().unwrap().to_string();
        assert_eq!(first("latency.csv"), "query_idx,template,latency_us,access_path,tuples_scanned");
        assert_eq!(first("summary.csv"), "config_hash,cumulative_us,queries,scheme,dl,frequency");
        let lines = std::fs::read_to_string(dir.path().join("latency.csv")).unwrap().lines().count();
        assert_eq!(lines, 51);
    }
}
