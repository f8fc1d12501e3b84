//! Query processing utility, maintenance cost and footprint estimates,
//! all priced with the executor's cost model.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::exec::cost::{plan_query, IndexView, TableInput, TableStats};
use crate::exec::{Database, QueryKind};
use crate::monitor::QueryRecord;
use crate::pindex::{IndexKeySpec, Scheme, LOCATION_WIDTH, NODE_OVERHEAD};
use crate::storage::Schema;

/// Per-entry maintenance cost for an index of `entries` entries.
pub fn maintenance_cost_per_entry(entries: f64) -> f64 {
    2.0 * entries.max(2.0).log2()
}

#[derive(Debug, Clone)]
pub struct TableContext {
    pub schema: Arc<Schema>,
    pub stats: TableStats,
    pub views: Vec<IndexView>,
    /// Entry counts of existing indexes.
    pub entries: BTreeMap<IndexKeySpec, usize>,
}

/// Immutable snapshot of everything utility computations read.
#[derive(Debug, Clone, Default)]
pub struct CostContext {
    tables: BTreeMap<String, TableContext>,
}

impl CostContext {
    pub fn new() -> Self {
        CostContext::default()
    }

    pub fn capture(db: &Database) -> Self {
        let mut ctx = CostContext::new();
        for t in db.tables() {
            let stats = db.stats(t.name()).expect("table exists");
            let entries =
                db.indexes().for_table(t.name()).iter().map(|i| (i.spec().clone(), i.entry_count())).collect();
            ctx.tables.insert(
                t.name().to_string(),
                TableContext { schema: t.schema().clone(), stats, views: db.index_views(&t), entries },
            );
        }
        ctx
    }

    pub fn insert_table(&mut self, table: TableContext) {
        self.tables.insert(table.schema.name().to_string(), table);
    }

    pub fn table(&self, name: &str) -> Option<&TableContext> {
        self.tables.get(name)
    }

    pub fn schemas(&self) -> impl Iterator<Item = &Arc<Schema>> {
        self.tables.values().map(|t| &t.schema)
    }

    /// Estimated cost of `r` with `spec` removed and, if given, `with` added.
    fn cost(&self, r: &QueryRecord, spec: &IndexKeySpec, with: Option<&IndexView>) -> Option<f64> {
        let mut views = Vec::with_capacity(r.tables.len());
        let mut stats = Vec::with_capacity(r.tables.len());
        for acc in &r.tables {
            let t = self.tables.get(&acc.table)?;
            let mut v: Vec<IndexView> = t.views.iter().filter(|v| &v.spec != spec).cloned().collect();
            if let Some(w) = with.filter(|w| w.spec.table == acc.table) {
                v.push(w.clone());
            }
            views.push(v);
            stats.push(&t.stats);
        }
        let inputs: Vec<TableInput<'_>> = r
            .tables
            .iter()
            .zip(&views)
            .zip(&stats)
            .map(|((acc, v), s)| TableInput { stats: s, predicate: &acc.predicate, indexes: v })
            .collect();
        Some(plan_query(&inputs, r.join).cost)
    }

    /// Summed cost saved on the scans of `records` by `spec` fully built
    /// under `scheme`.
    pub fn qpu<'a>(
        &self,
        spec: &IndexKeySpec,
        scheme: Scheme,
        records: impl IntoIterator<Item = &'a QueryRecord>,
    ) -> f64 {
        let Some(attrs) = self.tables.get(&spec.table).and_then(|t| spec.resolve(&t.schema).ok()) else {
            return 0.0;
        };
        let view = IndexView::hypothetical(spec.clone(), attrs, scheme);
        let mut total = 0.0;
        for r in records {
            if r.kind == QueryKind::Insert || !r.tables.iter().any(|a| a.table == spec.table) {
                continue;
            }
            let (Some(without), Some(with)) = (self.cost(r, spec, None), self.cost(r, spec, Some(&view))) else {
                continue;
            };
            total += (without - with).max(0.0);
        }
        total
    }

    /// Entries an index on `spec` holds, or will hold once built.
    pub fn expected_entries(&self, spec: &IndexKeySpec) -> f64 {
        let Some(t) = self.tables.get(&spec.table) else { return 0.0 };
        match t.entries.get(spec) {
            Some(&e) => (e as f64).max(t.stats.versions),
            None => t.stats.versions,
        }
    }

    /// Summed upkeep of `spec` over the mutators in `records`.
    pub fn imc<'a>(&self, spec: &IndexKeySpec, records: impl IntoIterator<Item = &'a QueryRecord>) -> f64 {
        let Some(t) = self.tables.get(&spec.table) else { return 0.0 };
        let entries = t.entries.get(spec).map_or(t.stats.versions, |&e| e as f64);
        let per = maintenance_cost_per_entry(entries);
        records
            .into_iter()
            .filter(|r| r.kind.is_mutator() && r.tables.first().is_some_and(|a| a.table == spec.table))
            .map(|r| r.rows_written as f64 * per)
            .sum()
    }

    /// `max(0, QPU − IMC)`.
    pub fn overall_utility(&self, spec: &IndexKeySpec, scheme: Scheme, records: &[&QueryRecord]) -> f64 {
        (self.qpu(spec, scheme, records.iter().copied()) - self.imc(spec, records.iter().copied())).max(0.0)
    }

    /// Footprint of `spec` once it covers the whole table.
    pub fn footprint_estimate(&self, spec: &IndexKeySpec) -> u64 {
        let Some(t) = self.tables.get(&spec.table) else { return 0 };
        let Ok(attrs) = spec.resolve(&t.schema) else { return 0 };
        let key: usize = attrs.iter().map(|&a| t.schema.attributes()[a].kind.width()).sum();
        let per = (key + LOCATION_WIDTH + NODE_OVERHEAD) as f64;
        (self.expected_entries(spec) * per).ceil().max(per) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{Histogram, Template};
    use crate::monitor::TableAccess;
    use crate::pindex::IntervalSet;
    use crate::storage::{Attribute, Conjunct, Predicate};
    use proptest::prelude::*;

    const N: f64 = 1_048_576.0;

    fn ctx(views: Vec<IndexView>, entries: &[(IndexKeySpec, usize)]) -> CostContext {
        let schema = Schema::new("r", (1..=3).map(|i| Attribute::int4(format!("a{i}"))).collect()).unwrap();
        let uniform = Histogram::from_values(&(0..100_000).collect::<Vec<_>>());
        let stats = TableStats { versions: N, histograms: vec![uniform; 3] };
        let mut c = CostContext::new();
        c.insert_table(TableContext {
            schema: Arc::new(schema),
            stats,
            views,
            entries: entries.iter().cloned().collect(),
        });
        c
    }

    fn scan(lo: i64, hi: i64) -> QueryRecord {
        let pred = Predicate::new(vec![Conjunct::new(0, lo, hi)]);
        QueryRecord {
            seq: 0,
            cycle: 0,
            kind: QueryKind::Scan,
            template: Template::LowS,
            tables: vec![TableAccess { table: "r".into(), predicate: pred, range: vec![0], ..Default::default() }],
            join: None,
            tuples_scanned: 0,
            tuples_via_index: 0,
            rows_written: 0,
        }
    }

    fn insert(rows: u64) -> QueryRecord {
        QueryRecord {
            kind: QueryKind::Insert,
            template: Template::Ins,
            tables: vec![TableAccess { table: "r".into(), ..Default::default() }],
            rows_written: rows,
            ..scan(0, 0)
        }
    }

    fn a1() -> IndexKeySpec {
        IndexKeySpec::new("r", ["a1"])
    }

    #[test]
    fn qpu_of_low_selectivity_scans() {
        let c = ctx(vec![], &[]);
        // 1% of a uniform [0, 100000) domain
        let recs: Vec<QueryRecord> = (0..100).map(|_| scan(0, 999)).collect();
        let s = 0.01;
        let want = 100.0 * (N - (N.log2() + 2.0 * s * N));
        let got = c.qpu(&a1(), Scheme::Vap, &recs);
        assert!((got - want).abs() / want < 1e-9, "{got} vs {want}");
        assert_eq!(c.qpu(&IndexKeySpec::new("r", ["a2"]), Scheme::Vap, &recs), 0.0);
    }

    #[test]
    fn qpu_ignores_what_existing_indexes_already_give() {
        let have = IndexView::hypothetical(IndexKeySpec::new("r", ["a1", "a2"]), vec![0, 1], Scheme::Vap);
        let c = ctx(vec![have], &[]);
        assert_eq!(c.qpu(&a1(), Scheme::Vap, &[scan(0, 999)]), 0.0);
    }

    #[test]
    fn imc_of_inserts() {
        let c = ctx(vec![], &[(a1(), 1 << 20)]);
        let recs: Vec<QueryRecord> = (0..100).map(|_| insert(1)).collect();
        assert_eq!(c.imc(&a1(), &recs), 4000.0);
        assert_eq!(c.imc(&a1(), &[scan(0, 10)]), 0.0);
        let mixed = [scan(0, 999), insert(1)];
        let refs: Vec<&QueryRecord> = mixed.iter().collect();
        let u = c.overall_utility(&a1(), Scheme::Vap, &refs);
        assert!((u - (c.qpu(&a1(), Scheme::Vap, &mixed) - 40.0)).abs() < 1e-6);
        let writes: Vec<&QueryRecord> = recs.iter().collect();
        assert_eq!(c.overall_utility(&a1(), Scheme::Vap, &writes), 0.0);
    }

    #[test]
    fn footprint_covers_the_table() {
        let c = ctx(vec![], &[]);
        assert_eq!(c.footprint_estimate(&a1()), (N as u64) * 60);
        assert_eq!(c.footprint_estimate(&IndexKeySpec::new("r", ["a1", "a2"])), (N as u64) * 64);
        assert_eq!(c.footprint_estimate(&IndexKeySpec::new("zz", ["a1"])), 0);
    }

    #[test]
    fn partial_existing_index_is_replaced_not_stacked() {
        let mut v = IndexView::hypothetical(a1(), vec![0], Scheme::Vap);
        v.fraction = 0.5;
        v.complete = false;
        v.subdomains = IntervalSet::new();
        let c = ctx(vec![v], &[(a1(), 1000)]);
        let full = ctx(vec![], &[]);
        assert_eq!(c.qpu(&a1(), Scheme::Vap, &[scan(0, 99)]), full.qpu(&a1(), Scheme::Vap, &[scan(0, 99)]));
    }

    proptest! {
        #[test]
        fn qpu_is_additive_and_non_negative(
            a in prop::collection::vec((0i64..100_000, 0i64..50_000), 0..20),
            b in prop::collection::vec((0i64..100_000, 0i64..50_000), 0..20),
        ) {
            let c = ctx(vec![], &[]);
            let r1: Vec<QueryRecord> = a.iter().map(|(lo, w)| scan(*lo, lo + w)).collect();
            let r2: Vec<QueryRecord> = b.iter().map(|(lo, w)| scan(*lo, lo + w)).collect();
            let q1 = c.qpu(&a1(), Scheme::Vap, &r1);
            let q2 = c.qpu(&a1(), Scheme::Vap, &r2);
            let both = c.qpu(&a1(), Scheme::Vap, r1.iter().chain(&r2));
            prop_assert!(q1 >= 0.0 && q2 >= 0.0);
            prop_assert!((both - (q1 + q2)).abs() <= 1e-9 * both.max(1.0));
        }
    }
}
