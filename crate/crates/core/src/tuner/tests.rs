use super::*;
use crate::exec::{Query, SetClause, SetValue, Template};
use crate::storage::{Attribute, Conjunct, Predicate, Schema};
use rand::Rng;

fn database(rows: usize) -> Arc<Database> {
    let db = Arc::new(Database::new(100));
    let schema = Schema::new("r", (1..=3).map(|i| Attribute::int4(format!("a{i}"))).collect()).unwrap();
    let t = db.create_table(schema).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data: Vec<Vec<i64>> = (0..rows).map(|_| (0..3).map(|_| rng.random_range(0..10_000)).collect()).collect();
    t.insert_batch(&data).unwrap();
    db.analyze_all().unwrap();
    db
}

fn low_s(attr: usize, lo: i64) -> Query {
    Query::scan(Template::LowS, "r", Predicate::new(vec![Conjunct::new(attr, lo, lo + 99)]), vec![1])
}

fn config(logic: DecisionLogic) -> TunerConfig {
    TunerConfig { logic, pages_per_step: 20, ..TunerConfig::default() }
}

fn run(db: &Database, qs: impl IntoIterator<Item = Query>) {
    for q in qs {
        db.execute(&q).unwrap();
    }
}

#[test]
fn parse_and_display() {
    for s in ["FAST", "MOD", "SLOW", "DIS", "Q50"] {
        assert_eq!(s.parse::<Frequency>().unwrap().to_string(), s);
    }
    assert!("Q0".parse::<Frequency>().is_err());
    assert_eq!("retrospective:20".parse::<DecisionLogic>().unwrap(), DecisionLogic::Retrospective(20));
    assert_eq!("Predictive".parse::<DecisionLogic>().unwrap(), DecisionLogic::Predictive);
    assert!("retrospective:0".parse::<DecisionLogic>().is_err());
    assert!("sometimes".parse::<DecisionLogic>().is_err());
    assert!(TunerConfig { pages_per_step: 0, ..TunerConfig::default() }.validate().is_err());
}

#[test]
fn dominant_predicate_creates_one_index_and_starts_building() {
    let db = database(20_000);
    run(&db, (0..30).map(|i| low_s(0, i * 10)));
    let mut t = Tuner::new(db.clone(), config(DecisionLogic::Retrospective(100)), Classifier::default()).unwrap();
    let r = t.cycle().unwrap();
    assert_eq!(r.classification, Classification::ReadIntensive);
    assert_eq!(r.creates, vec![IndexKeySpec::new("r", ["a1"])]);
    assert_eq!(r.pages_indexed, 20);
    assert_eq!(r.built, 0);
    // the build is spread over cycles
    let mut cycles = 1;
    while db.indexes().snapshot().iter().any(|i| !i.is_complete(&db.table("r").unwrap())) {
        let r = t.cycle().unwrap();
        assert!(r.pages_indexed <= 20);
        cycles += 1;
    }
    assert_eq!(cycles, 10);
}

#[test]
fn noise_query_only_moves_immediate() {
    for (logic, want) in [
        (DecisionLogic::Immediate, 1),
        (DecisionLogic::Retrospective(100), 0),
        (DecisionLogic::Predictive, 0),
    ] {
        let db = database(20_000);
        let mut t = Tuner::new(db.clone(), config(logic), Classifier::default()).unwrap();
        run(&db, [low_s(2, 500)]);
        let r = t.cycle().unwrap();
        assert_eq!(r.creates.len(), want, "{logic}");
    }
}

#[test]
fn u_min_follows_the_logic_window() {
    // one scan saves just under a table's worth of tuples
    let base = 3.0 * 20_000.0;
    for (logic, want) in [
        (DecisionLogic::Immediate, vec!["a1", "a3"]),
        (DecisionLogic::Retrospective(100), vec!["a1"]),
        (DecisionLogic::Predictive, vec!["a1"]),
    ] {
        let db = database(20_000);
        let cfg = TunerConfig { base_u_min: Some(base), ..config(logic) };
        let mut t = Tuner::new(db.clone(), cfg, Classifier::default()).unwrap();
        run(&db, (0..99).map(|i| low_s(0, i * 10)));
        run(&db, [low_s(2, 500)]);
        let r = t.cycle().unwrap();
        let mut got: Vec<String> = r.creates.iter().map(|s| s.attributes.join(",")).collect();
        got.sort();
        assert_eq!(got, want, "{logic}");
        assert_eq!(r.u_min, base * 0.5 * if logic == DecisionLogic::Immediate { 0.01 } else { 1.0 });
    }
}

#[test]
fn inserts_drop_unused_indexes_but_not_protected_ones() {
    let db = database(5_000);
    let t_r = db.table("r").unwrap();
    for a in ["a1", "a2"] {
        db.create_index(IndexKeySpec::new("r", [a]), Scheme::Vap).unwrap().build_to_completion(&t_r).unwrap();
    }
    let update = Query::update(
        Template::LowU,
        "r",
        Predicate::new(vec![Conjunct::new(1, 10, 12)]),
        vec![SetClause { attr: 2, value: SetValue::Increment }],
    );
    run(&db, [update]);
    run(&db, (0..99).map(|i| Query::insert("r", vec![vec![i, i, i]])));
    let mut t = Tuner::new(db.clone(), config(DecisionLogic::Retrospective(100)), Classifier::default()).unwrap();
    let r = t.cycle().unwrap();
    assert_eq!(r.classification, Classification::WriteIntensive);
    assert_eq!(r.drops, vec![IndexKeySpec::new("r", ["a1"])]);
    for _ in 0..5 {
        assert!(t.cycle().unwrap().drops.is_empty());
    }
    assert_eq!(db.indexes().specs(), vec![IndexKeySpec::new("r", ["a2"])]);
}

#[test]
fn holistic_never_drops_within_budget() {
    let db = database(5_000);
    let t_r = db.table("r").unwrap();
    db.create_index(IndexKeySpec::new("r", ["a1"]), Scheme::Vbp).unwrap();
    let _ = t_r;
    let mut cfg = config(DecisionLogic::Holistic);
    cfg.scheme = Scheme::Vbp;
    let mut t = Tuner::new(db.clone(), cfg, Classifier::default()).unwrap();
    run(&db, (0..50).map(|i| Query::insert("r", vec![vec![i, i, i]])));
    assert!(t.cycle().unwrap().drops.is_empty());
    run(&db, [low_s(1, 100)]);
    let r = t.cycle().unwrap();
    assert_eq!(r.creates, vec![IndexKeySpec::new("r", ["a2"])]);
}

#[test]
fn deterministic_reports() {
    let go = || {
        let db = database(10_000);
        let mut t = Tuner::new(db.clone(), config(DecisionLogic::Predictive), Classifier::default()).unwrap();
        let mut out = Vec::new();
        for phase in 0..6 {
            run(&db, (0..40).map(|i| low_s(phase % 2, i * 7)));
            let mut r = t.cycle().unwrap();
            r.elapsed_us = 0.0;
            out.push(r);
        }
        out
    };
    assert_eq!(go(), go());
}

#[test]
fn drop_all_retires_models() {
    let db = database(5_000);
    run(&db, (0..10).map(|i| low_s(0, i)));
    let mut t = Tuner::new(db.clone(), config(DecisionLogic::Predictive), Classifier::default()).unwrap();
    t.cycle().unwrap();
    assert_eq!(t.drop_all(), vec![IndexKeySpec::new("r", ["a1"])]);
    assert!(db.indexes().is_empty());
    assert!(t.forecaster().lookup(&IndexKeySpec::new("r", ["a1"])).unwrap().retired);
}

#[test]
fn wall_clock_thread_runs_cycles() {
    let db = database(5_000);
    let t = Tuner::new(db.clone(), config(DecisionLogic::Retrospective(100)), Classifier::default()).unwrap();
    let th = TunerThread::spawn(t, Duration::from_millis(5));
    let end = Instant::now() + Duration::from_millis(200);
    let mut i = 0;
    while Instant::now() < end {
        db.execute(&low_s(0, i % 5000)).unwrap();
        i += 1;
    }
    let (t, reports) = th.stop();
    assert!(t.cycles() > 0);
    assert_eq!(reports.len() as u64, t.cycles());
    assert!(!db.indexes().is_empty());
}
