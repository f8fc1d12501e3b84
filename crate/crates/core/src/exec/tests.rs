use super::*;
use crate::pindex::BuildBudget;
use crate::storage::{Attribute, Conjunct};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn schema(name: &str, p: usize) -> Schema {
    Schema::new(name, (1..=p).map(|i| Attribute::int4(format!("a{i}"))).collect()).unwrap()
}

fn filled(db: &Database, name: &str, rows: usize, p: usize, seed: u64, domain: i64) -> Arc<Table> {
    let t = db.create_table(schema(name, p)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Vec<Value>> = (0..rows).map(|_| (0..p).map(|_| rng.random_range(1..=domain)).collect()).collect();
    t.insert_batch(&data).unwrap();
    t
}

fn visible_rows(t: &Table) -> Vec<Vec<Value>> {
    t.scan_pages(0, t.current_epoch(), &Predicate::all()).map(|(_, v)| v).collect()
}

#[test]
fn low_s_sum_matches_reference() {
    let db = Database::new(100);
    let t = filled(&db, "r", 5_000, 3, 1, 1000);
    db.analyze("r").unwrap();
    let spec = IndexKeySpec::new("r", ["a1"]);
    let idx = db.create_index(spec, Scheme::Vap).unwrap();
    idx.build_step(&t, BuildBudget::pages(20).unwrap()).unwrap();
    let pred = Predicate::new(vec![Conjunct::new(0, 100, 110)]);
    let q = Query::scan(Template::LowS, "r", pred.clone(), vec![1, 2]);
    let (out, stats) = db.execute(&q).unwrap();
    assert_eq!(stats.access_path, "HybridScan");
    let rows: Vec<_> = visible_rows(&t).into_iter().filter(|r| pred.matches(r)).collect();
    let want = QueryOutput::Aggregate {
        count: rows.len() as u64,
        sums: vec![rows.iter().map(|r| r[1] as i128).sum(), rows.iter().map(|r| r[2] as i128).sum()],
    };
    assert_eq!(out, want);
    assert_eq!(db.execute_reference(&q).unwrap(), want);
    assert!(stats.tuples_scanned < 5_000);
    assert_eq!(db.monitor().snapshot().len(), 1);
}

#[test]
fn insert_scans_nothing_and_maintains_caught_up_indexes() {
    let db = Database::new(10);
    let t = filled(&db, "r", 25, 2, 2, 50);
    let i = db.create_index(IndexKeySpec::new("r", ["a1"]), Scheme::Vap).unwrap();
    i.build_to_completion(&t).unwrap();
    let (out, stats) = db.execute(&Query::insert("r", vec![vec![1, 2], vec![3, 4]])).unwrap();
    assert_eq!(out, QueryOutput::Mutation { written: 2 });
    assert_eq!(stats.tuples_scanned, 0);
    assert_eq!(stats.index_entries_written, 2);
    assert!(i.is_complete(&t));
}

#[test]
fn join_matches_nested_loop_oracle() {
    let db = Database::new(50);
    let x = filled(&db, "x", 600, 3, 3, 40);
    let y = filled(&db, "y", 400, 3, 4, 40);
    db.analyze_all().unwrap();
    let lp = Predicate::new(vec![Conjunct::new(0, 1, 20)]);
    let rp = Predicate::new(vec![Conjunct::new(1, 5, 40)]);
    let q = Query::join(
        TableQuery::new("x", lp.clone()),
        TableQuery::new("y", rp.clone()),
        JoinSpec { left: 2, right: 2 },
        vec![0, 1],
        vec![0],
    )
    .with_output(OutputMode::Rows);
    let mut want = Vec::new();
    for a in visible_rows(&x).iter().filter(|r| lp.matches(r)) {
        for b in visible_rows(&y).iter().filter(|r| rp.matches(r)) {
            if a[2] == b[2] {
                want.push(vec![a[0], a[1], b[0]]);
            }
        }
    }
    want.sort();
    let (out, stats) = db.execute(&q).unwrap();
    assert_eq!(out, QueryOutput::Rows(want.clone()));
    assert!(stats.access_path.ends_with("HashJoin"));
    let i = db.create_index(IndexKeySpec::new("y", ["a3"]), Scheme::Vap).unwrap();
    i.build_to_completion(&y).unwrap();
    let plan = Plan {
        paths: vec![AccessPath::TableScan, AccessPath::TableScan],
        join: Some(JoinStrategy::IndexNestedLoop(i.spec().clone())),
        cost: 0.0,
    };
    let (out, stats) = db.execute_with_plan(&q, &plan).unwrap();
    assert_eq!(out, QueryOutput::Rows(want));
    assert_eq!(stats.access_path, "TableScan+IndexNestedLoop");
}

#[test]
fn update_then_scan_sees_new_values() {
    let db = Database::new(4);
    let t = filled(&db, "r", 20, 2, 5, 10);
    let before = visible_rows(&t);
    let pred = Predicate::new(vec![Conjunct::new(0, 1, 5)]);
    let q = Query::update(Template::LowU, "r", pred.clone(), vec![SetClause { attr: 1, value: SetValue::Increment }]);
    let (out, _) = db.execute(&q).unwrap();
    let n = before.iter().filter(|r| pred.matches(r)).count() as u64;
    assert_eq!(out, QueryOutput::Mutation { written: n });
    let mut want: Vec<Vec<Value>> =
        before.into_iter().map(|mut r| { if pred.matches(&r) { r[1] += 1 } r }).collect();
    let mut got = visible_rows(&t);
    want.sort();
    got.sort();
    assert_eq!(got, want);
}

#[test]
fn plan_validation() {
    let db = Database::new(4);
    filled(&db, "r", 4, 2, 6, 10);
    assert!(matches!(db.create_table(schema("r", 1)), Err(Error::DuplicateTable(_))));
    let bad = Query::scan(Template::LowS, "r", Predicate::new(vec![Conjunct::new(0, 5, 1)]), vec![]);
    assert!(matches!(db.execute(&bad), Err(Error::InvalidQuery(_))));
    let q = Query::scan(Template::LowS, "r", Predicate::all(), vec![]);
    assert!(matches!(db.execute_with_plan(&q, &Plan::table_scans(2)), Err(Error::PlanMismatch(_))));
    assert!(matches!(db.execute(&Query::scan(Template::LowS, "zz", Predicate::all(), vec![])), Err(Error::UnknownTable(_))));
}

#[test]
fn vbp_immediate_population_in_query_path() {
    let db = Database::new(100);
    let t = filled(&db, "r", 2_000, 2, 7, 1000);
    db.analyze("r").unwrap();
    db.set_vbp_population(VbpPopulation::Immediate);
    let i = db.create_index(IndexKeySpec::new("r", ["a1"]), Scheme::Vbp).unwrap();
    let q = Query::scan(Template::LowS, "r", Predicate::new(vec![Conjunct::new(0, 10, 19)]), vec![1]);
    let (first, s1) = db.execute(&q).unwrap();
    assert_eq!(s1.access_path, "TableScan");
    assert!(i.entry_count() > 0);
    let (second, s2) = db.execute(&q).unwrap();
    assert_eq!(s2.access_path, "IndexScanFull");
    assert_eq!(s2.tuples_scanned, 0);
    assert_eq!(first, second);
    assert!(i.covers(&crate::pindex::KeyRange::leading(10, 19).unwrap()));
    let _ = t;
}

/// Random history of inserts and updates on a table of at most 10 pages.
fn history(cap: usize, ops: &[(bool, u64, i64, i64)]) -> (Database, Arc<Table>) {
    let db = Database::new(cap);
    let t = db.create_table(schema("r", 2)).unwrap();
    for &(is_update, pick, a, b) in ops {
        if t.page_count() >= 10 && t.tail().slot == 0 {
            break;
        }
        let live: Vec<Location> = t.scan_pages(0, t.current_epoch(), &Predicate::all()).map(|(l, _)| l).collect();
        if is_update && !live.is_empty() {
            let l = live[(pick as usize) % live.len()];
            t.update(&[l], &[vec![a, b]]).unwrap();
        } else {
            t.insert(&[a, b]).unwrap();
        }
    }
    (db, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hybrid_scan_equals_filtered_table_scan(
        cap in 3usize..6,
        ops in prop::collection::vec((any::<bool>(), any::<u64>(), 0i64..30, 0i64..30), 1..50),
        preds in prop::collection::vec((0i64..30, 0i64..10, 0i64..30, 0i64..30), 1..8),
        composite in any::<bool>(),
    ) {
        let (_db, t) = history(cap, &ops);
        let epochs: Vec<Epoch> = vec![Epoch(0), Epoch(t.current_epoch().0 / 2), t.current_epoch()];
        let pages = t.page_count();
        let attrs: Vec<&str> = if composite { vec!["a1", "a2"] } else { vec!["a1"] };
        for wm in -1..pages as i64 {
            let idx = PartialIndex::new(IndexKeySpec::new("r", attrs.clone()), Scheme::Vap, &t).unwrap();
            idx.build_until(&t, Location::new((wm + 1) as u32, 0)).unwrap();
            // and part of the next page
            let partial = PartialIndex::new(IndexKeySpec::new("r", attrs.clone()), Scheme::Vap, &t).unwrap();
            partial.build_until(&t, Location::new((wm + 1) as u32, 1)).unwrap();
            for (lo, w, blo, bhi) in &preds {
                let mut cs = vec![Conjunct::new(0, *lo, lo + w)];
                if blo <= bhi {
                    cs.push(Conjunct::new(1, *blo, *bhi));
                }
                let pred = Predicate::new(cs);
                for e in &epochs {
                    let mut want: Vec<Location> = t.scan_pages(0, *e, &pred).map(|(l, _)| l).collect();
                    want.sort();
                    for i in [&idx, &partial] {
                        let mut got = Vec::new();
                        scan::hybrid_scan(&t, i, &pred, *e, |l, _| got.push(l)).unwrap();
                        got.sort();
                        prop_assert_eq!(&got, &want);
                    }
                }
            }
        }
    }

    #[test]
    fn old_versions_vanish_after_update(vals in prop::collection::vec(0i64..20, 2..20), pick in any::<usize>()) {
        let db = Database::new(3);
        let t = db.create_table(schema("r", 1)).unwrap();
        let locs: Vec<Location> = vals.iter().map(|v| t.insert(&[*v]).unwrap()).collect();
        let l = locs[pick % locs.len()];
        let e_before = t.current_epoch();
        t.update(&[l], &[vec![99]]).unwrap();
        let idx = PartialIndex::new(IndexKeySpec::new("r", ["a1"]), Scheme::Vap, &t).unwrap();
        idx.build_to_completion(&t).unwrap();
        let pred = Predicate::new(vec![Conjunct::new(0, 0, 100)]);
        let mut now = Vec::new();
        scan::hybrid_scan(&t, &idx, &pred, t.current_epoch(), |loc, _| now.push(loc)).unwrap();
        prop_assert!(!now.contains(&l));
        let mut then = Vec::new();
        scan::hybrid_scan(&t, &idx, &pred, e_before, |loc, _| then.push(loc)).unwrap();
        prop_assert!(then.contains(&l));
    }
}
