//! Query execution over tables and the current index configuration.
//!
//! [`Database`] owns the tables, the index registry, optimizer statistics
//! and the workload monitor. Queries are planned with the analytic cost
//! model in [`cost`] and executed with the operators in [`scan`].

pub mod cost;
pub mod histogram;
mod query;
pub mod scan;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::{Mutex, RwLock};

use crate::error::{Error, Result};
use crate::monitor::{Monitor, QueryRecord, TableAccess};
use crate::pindex::{IndexConfiguration, IndexKey, IndexKeySpec, PartialIndex, Scheme};
use crate::storage::{Epoch, Location, Predicate, RowRef, Schema, Table, Value, DEFAULT_PAGE_CAPACITY};

pub use cost::{AccessPath, IndexView, JoinStrategy, Plan, TableInput, TableStats};
pub use histogram::Histogram;
pub use query::{JoinSpec, OutputMode, Query, QueryKind, QueryOutput, SetClause, SetValue, TableQuery, Template};
pub use scan::{HybridTrace, ScanCounters, VbpPopulation};

/// Measurements for one executed query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryStats {
    pub latency_us: f64,
    pub tuples_scanned: u64,
    pub tuples_via_index: u64,
    pub index_entries_read: u64,
    /// Label of the access path actually taken.
    pub access_path: String,
    pub rows_written: u64,
    /// Index entries added by maintenance.
    pub index_entries_written: u64,
}

/// Folds scan output into a [`QueryOutput`].
struct Sink {
    mode: OutputMode,
    count: u64,
    sums: Vec<i128>,
    rows: Vec<Vec<Value>>,
}

impl Sink {
    fn new(mode: OutputMode, width: usize) -> Self {
        Sink { mode, count: 0, sums: vec![0; width], rows: Vec::new() }
    }

    fn push(&mut self, left: &RowRef<'_>, lp: &[usize], right: Option<(&RowRef<'_>, &[usize])>) {
        self.count += 1;
        let right_vals = right.into_iter().flat_map(|(r, p)| p.iter().map(move |a| r.get(*a)));
        let vals = lp.iter().map(|a| left.get(*a)).chain(right_vals);
        match self.mode {
            OutputMode::Aggregate => {
                for (s, v) in self.sums.iter_mut().zip(vals) {
                    *s += v as i128;
                }
            }
            OutputMode::Rows => self.rows.push(vals.collect()),
        }
    }

    fn finish(mut self) -> QueryOutput {
        match self.mode {
            OutputMode::Aggregate => QueryOutput::Aggregate { count: self.count, sums: self.sums },
            OutputMode::Rows => {
                self.rows.sort_unstable();
                QueryOutput::Rows(self.rows)
            }
        }
    }
}

/// Tables, indexes, statistics and the workload monitor.
pub struct Database {
    tables: RwLock<BTreeMap<String, Arc<Table>>>,
    indexes: IndexConfiguration,
    stats: RwLock<BTreeMap<String, Arc<TableStats>>>,
    monitor: Monitor,
    page_capacity: usize,
    vbp_population: AtomicU8,
    mutator: Mutex<()>,
}

impl std::fmt::Debug for Database {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Database")
            .field("tables", &self.tables.read().keys().collect::<Vec<_>>())
            .field("indexes", &self.indexes.specs())
            .finish()
    }
}

impl Default for Database {
    fn default() -> Self {
        Database::new(DEFAULT_PAGE_CAPACITY)
    }
}

impl Database {
    pub fn new(page_capacity: usize) -> Self {
        Database::with_monitor(page_capacity, Monitor::default())
    }

    pub fn with_monitor(page_capacity: usize, monitor: Monitor) -> Self {
        Database {
            tables: RwLock::new(BTreeMap::new()),
            indexes: IndexConfiguration::new(),
            stats: RwLock::new(BTreeMap::new()),
            monitor,
            page_capacity,
            vbp_population: AtomicU8::new(0),
            mutator: Mutex::new(()),
        }
    }

    pub fn create_table(&self, schema: Schema) -> Result<Arc<Table>> {
        let mut tables = self.tables.write();
        if tables.contains_key(schema.name()) {
            return Err(Error::DuplicateTable(schema.name().to_string()));
        }
        let t = Arc::new(Table::new(schema, self.page_capacity)?);
        tables.insert(t.name().to_string(), t.clone());
        Ok(t)
    }

    pub fn table(&self, name: &str) -> Result<Arc<Table>> {
        self.tables.read().get(name).cloned().ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn tables(&self) -> Vec<Arc<Table>> {
        self.tables.read().values().cloned().collect()
    }

    pub fn indexes(&self) -> &IndexConfiguration {
        &self.indexes
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn vbp_population(&self) -> VbpPopulation {
        match self.vbp_population.load(Ordering::Relaxed) {
            1 => VbpPopulation::Immediate,
            _ => VbpPopulation::Incremental,
        }
    }

    pub fn set_vbp_population(&self, p: VbpPopulation) {
        let v = match p {
            VbpPopulation::Incremental => 0,
            VbpPopulation::Immediate => 1,
        };
        self.vbp_population.store(v, Ordering::Relaxed);
    }

    pub fn create_index(&self, spec: IndexKeySpec, scheme: Scheme) -> Result<Arc<PartialIndex>> {
        let t = self.table(&spec.table)?;
        self.indexes.create(spec, scheme, &t)
    }

    /// Rebuilds the histograms of `table` from its visible tuples.
    pub fn analyze(&self, table: &str) -> Result<()> {
        let t = self.table(table)?;
        let arity = t.schema().arity();
        let epoch = t.current_epoch();
        let mut bounds = vec![(Value::MAX, Value::MIN); arity];
        let mut any = false;
        table_scan_rows(&t, epoch, |_, r| {
            any = true;
            for (a, b) in bounds.iter_mut().enumerate() {
                let v = r.get(a);
                *b = (b.0.min(v), b.1.max(v));
            }
        });
        let mut hists: Vec<Option<Histogram>> = if any {
            bounds.iter().map(|(lo, hi)| Some(Histogram::new(*lo, *hi))).collect()
        } else {
            vec![None; arity]
        };
        if any {
            table_scan_rows(&t, epoch, |_, r| {
                for (a, h) in hists.iter_mut().enumerate() {
                    h.as_mut().expect("built above").add(r.get(a));
                }
            });
        }
        let stats = TableStats { versions: t.version_count() as f64, histograms: hists };
        self.stats.write().insert(table.to_string(), Arc::new(stats));
        Ok(())
    }

    pub fn analyze_all(&self) -> Result<()> {
        for t in self.tables() {
            self.analyze(t.name())?;
        }
        Ok(())
    }

    /// Current statistics; the version count is always live, histograms
    /// are as of the last [`Database::analyze`].
    pub fn stats(&self, table: &str) -> Result<TableStats> {
        let t = self.table(table)?;
        let mut s = self.stats.read().get(table).map(|s| (**s).clone()).unwrap_or_default();
        if s.histograms.len() != t.schema().arity() {
            s.histograms = vec![None; t.schema().arity()];
        }
        s.versions = t.version_count() as f64;
        Ok(s)
    }

    /// Planner view of every index on `table`.
    pub fn index_views(&self, table: &Table) -> Vec<IndexView> {
        let pages = table.page_count().max(1) as f64;
        self.indexes
            .for_table(table.name())
            .iter()
            .map(|i| IndexView {
                spec: i.spec().clone(),
                attrs: i.attrs().to_vec(),
                scheme: i.scheme(),
                fraction: ((i.watermark() + 1) as f64 / pages).clamp(0.0, 1.0),
                complete: i.is_complete(table),
                subdomains: crate::pindex::IntervalSet::from_ranges(i.subdomains()),
            })
            .collect()
    }

    fn resolve(&self, q: &Query) -> Result<Vec<Arc<Table>>> {
        let tables = q.tables.iter().map(|t| self.table(&t.table)).collect::<Result<Vec<_>>>()?;
        let schemas: Vec<&Schema> = tables.iter().map(|t| t.schema().as_ref()).collect();
        q.validate(&schemas)?;
        Ok(tables)
    }

    /// Chooses the cheapest plan for `q` under the current configuration.
    pub fn plan(&self, q: &Query) -> Result<Plan> {
        let tables = self.resolve(q)?;
        Ok(self.plan_resolved(q, &tables))
    }

    fn plan_resolved(&self, q: &Query, tables: &[Arc<Table>]) -> Plan {
        if q.kind() == QueryKind::Insert {
            return Plan { paths: vec![AccessPath::TableScan], join: None, cost: 0.0 };
        }
        let stats: Vec<TableStats> = tables.iter().map(|t| self.stats(t.name()).expect("resolved")).collect();
        let views: Vec<Vec<IndexView>> = tables.iter().map(|t| self.index_views(t)).collect();
        let inputs: Vec<TableInput<'_>> = q
            .tables
            .iter()
            .zip(&stats)
            .zip(&views)
            .map(|((tq, s), v)| TableInput { stats: s, predicate: &tq.predicate, indexes: v })
            .collect();
        cost::plan_query(&inputs, q.join)
    }

    /// Plans, executes and records `q` in the monitor.
    pub fn execute(&self, q: &Query) -> Result<(QueryOutput, QueryStats)> {
        let start = Instant::now();
        let tables = self.resolve(q)?;
        let plan = self.plan_resolved(q, &tables);
        self.run(q, &tables, &plan, start, true)
    }

    /// Executes `q` with a caller-supplied plan.
    pub fn execute_with_plan(&self, q: &Query, plan: &Plan) -> Result<(QueryOutput, QueryStats)> {
        let start = Instant::now();
        let tables = self.resolve(q)?;
        if plan.paths.len() != tables.len() && q.kind() != QueryKind::Insert {
            return Err(Error::PlanMismatch(format!("{} paths for {} tables", plan.paths.len(), tables.len())));
        }
        self.run(q, &tables, plan, start, true)
    }

    /// Executes `q` with table scans only and without recording it.
    pub fn execute_reference(&self, q: &Query) -> Result<QueryOutput> {
        let start = Instant::now();
        let tables = self.resolve(q)?;
        let plan = Plan::table_scans(tables.len());
        Ok(self.run(q, &tables, &plan, start, false)?.0)
    }

    fn run(
        &self,
        q: &Query,
        tables: &[Arc<Table>],
        plan: &Plan,
        start: Instant,
        record: bool,
    ) -> Result<(QueryOutput, QueryStats)> {
        let mut stats = QueryStats::default();
        let out = match q.kind() {
            QueryKind::Scan => {
                let epochs: Vec<Epoch> = tables.iter().map(|t| t.current_epoch()).collect();
                self.run_scan(q, tables, &epochs, plan, &mut stats)?
            }
            QueryKind::Update => {
                let _m = self.mutator.lock();
                self.run_update(q, &tables[0], plan, &mut stats)?
            }
            QueryKind::Insert => {
                let _m = self.mutator.lock();
                let (locs, written) = self.apply(&tables[0], |t, hook| t.insert_batch_with(&q.rows, hook))?;
                stats.access_path = "Insert".into();
                stats.rows_written = locs.len() as u64;
                stats.index_entries_written = written;
                QueryOutput::Mutation { written: locs.len() as u64 }
            }
        };
        stats.latency_us = start.elapsed().as_secs_f64() * 1e6;
        if record {
            self.monitor.record(record_for(q, &stats));
        }
        Ok((out, stats))
    }

    fn apply<F>(&self, table: &Table, op: F) -> Result<(Vec<Location>, u64)>
    where
        F: FnOnce(&Table, &mut dyn FnMut(Location, &[Value])) -> Result<Vec<Location>>,
    {
        let idx = self.indexes.for_table(table.name());
        let mut written = 0u64;
        let locs = op(table, &mut |loc, vals| {
            for i in &idx {
                written += u64::from(i.maintain(loc, vals));
            }
        })?;
        Ok((locs, written))
    }

    /// Runs one table's access path, falling back to a table scan when
    /// the planned index has been dropped in the meantime.
    fn scan_one<F>(&self, table: &Table, path: &AccessPath, pred: &Predicate, epoch: Epoch, f: F) -> Result<(ScanCounters, String)>
    where
        F: FnMut(Location, RowRef<'_>),
    {
        let index = path.spec().and_then(|s| self.indexes.get(s));
        match (path, index) {
            (AccessPath::HybridScan(_) | AccessPath::IndexScanFull(_), Some(i)) if i.scheme() != Scheme::Vbp => {
                let c = scan::hybrid_scan(table, &i, pred, epoch, f)?;
                Ok((c, path.name().to_string()))
            }
            (AccessPath::VbpScan(_), Some(i)) if i.scheme() == Scheme::Vbp => {
                let c = scan::vbp_scan(table, &i, pred, epoch, self.vbp_population(), f)?;
                let label = if c.index_only { "IndexScanFull" } else { "TableScan" };
                Ok((c, label.to_string()))
            }
            _ => Ok((scan::table_scan(table, pred, epoch, f), "TableScan".to_string())),
        }
    }

    fn run_scan(
        &self,
        q: &Query,
        tables: &[Arc<Table>],
        epochs: &[Epoch],
        plan: &Plan,
        stats: &mut QueryStats,
    ) -> Result<QueryOutput> {
        let width: usize = q.projection.iter().map(Vec::len).sum();
        let mut sink = Sink::new(q.output, width);
        let lp = &q.projection[0];
        let Some(j) = q.join else {
            let (c, label) = self.scan_one(&tables[0], &plan.paths[0], &q.tables[0].predicate, epochs[0], |_, r| {
                sink.push(&r, lp, None)
            })?;
            fill(stats, c, label);
            return Ok(sink.finish());
        };
        let rp = &q.projection[1];
        let (lt, rt) = (&tables[0], &tables[1]);
        let (lpred, rpred) = (&q.tables[0].predicate, &q.tables[1].predicate);
        let inl = match &plan.join {
            Some(JoinStrategy::IndexNestedLoop(s)) => self.indexes.get(s).filter(|i| i.is_complete(rt) && i.scheme() != Scheme::Vbp),
            _ => None,
        };
        let mut counters = ScanCounters::default();
        let label;
        if let Some(inner) = inl {
            let rsnap = rt.snapshot();
            let mut probe_stats = ScanCounters::default();
            let (c, l) = self.scan_one(lt, &plan.paths[0], lpred, epochs[0], |_, lrow| {
                let v = lrow.get(j.left);
                let p = inner.probe_range(IndexKey([v, Value::MIN, Value::MIN]), IndexKey([v, Value::MAX, Value::MAX]));
                probe_stats.entries_read += p.entries_read;
                for (_, loc) in p.hits {
                    probe_stats.via_index += 1;
                    // entries may point past the snapshot if the inner table grew
                    let Some(rrow) = rsnap.row(loc) else { continue };
                    if rsnap.visible(loc, epochs[1]) && rpred.matches_row(&rrow) && rrow.get(j.right) == v {
                        sink.push(&lrow, lp, Some((&rrow, rp)));
                    }
                }
            })?;
            counters.absorb(c);
            counters.absorb(probe_stats);
            label = format!("{l}+IndexNestedLoop");
        } else {
            let mut table: HashMap<Value, Vec<Location>> = HashMap::new();
            let rsnap = rt.snapshot();
            let (c, _) = self.scan_one(rt, &plan.paths[1], rpred, epochs[1], |loc, r| {
                table.entry(r.get(j.right)).or_default().push(loc)
            })?;
            counters.absorb(c);
            let (c, l) = self.scan_one(lt, &plan.paths[0], lpred, epochs[0], |_, lrow| {
                if let Some(matches) = table.get(&lrow.get(j.left)) {
                    for loc in matches {
                        let rrow = rsnap.row(*loc).expect("scanned from this snapshot's pages");
                        sink.push(&lrow, lp, Some((&rrow, rp)));
                    }
                }
            })?;
            counters.absorb(c);
            label = format!("{l}+HashJoin");
        }
        fill(stats, counters, label);
        Ok(sink.finish())
    }

    fn run_update(&self, q: &Query, table: &Arc<Table>, plan: &Plan, stats: &mut QueryStats) -> Result<QueryOutput> {
        let epoch = table.current_epoch();
        let mut locs = Vec::new();
        let mut rows = Vec::new();
        let path = plan.paths.first().cloned().unwrap_or(AccessPath::TableScan);
        let (c, label) = self.scan_one(table, &path, &q.tables[0].predicate, epoch, |loc, r| {
            let mut v = r.to_vec();
            for s in &q.sets {
                v[s.attr] = match s.value {
                    SetValue::Const(x) => x,
                    SetValue::Increment => v[s.attr] + 1,
                };
            }
            locs.push(loc);
            rows.push(v);
        })?;
        fill(stats, c, label);
        let (new, written) = self.apply(table, |t, hook| t.update_with(&locs, &rows, hook))?;
        stats.rows_written = new.len() as u64;
        stats.index_entries_written = written;
        Ok(QueryOutput::Mutation { written: new.len() as u64 })
    }
}

fn fill(stats: &mut QueryStats, c: ScanCounters, label: String) {
    stats.tuples_scanned = c.scanned;
    stats.tuples_via_index = c.via_index;
    stats.index_entries_read = c.entries_read;
    stats.access_path = label;
}

fn table_scan_rows<F: FnMut(Location, RowRef<'_>)>(t: &Table, epoch: Epoch, f: F) {
    scan::table_scan(t, &Predicate::all(), epoch, f);
}

/// Monitor record describing `q`.
pub fn record_for(q: &Query, stats: &QueryStats) -> QueryRecord {
    let tables = q
        .tables
        .iter()
        .enumerate()
        .map(|(i, tq)| {
            let mut acc = TableAccess { table: tq.table.clone(), predicate: tq.predicate.clone(), ..Default::default() };
            for a in TableAccess::predicate_attrs(&acc) {
                let (lo, hi) = tq.predicate.bounds(a).expect("attribute is constrained");
                if lo == hi {
                    acc.equality.push(a);
                } else {
                    acc.range.push(a);
                }
            }
            if let Some(j) = q.join {
                acc.join.push(if i == 0 { j.left } else { j.right });
            }
            acc.other = q.projection[i].clone();
            if i == 0 {
                acc.other.extend(q.sets.iter().map(|s| s.attr));
            }
            acc
        })
        .collect();
    QueryRecord {
        seq: 0,
        cycle: 0,
        kind: q.kind(),
        template: q.template,
        tables,
        join: q.join,
        tuples_scanned: stats.tuples_scanned,
        tuples_via_index: stats.tuples_via_index,
        rows_written: stats.rows_written,
    }
}

#[cfg(test)]
mod tests;
