//! Phased workloads with mixture interleave and noise.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tidemark::exec::{Query, QueryKind, Template};

use crate::config::{BenchConfig, PhaseOrder};
use crate::queries::{arity, QueryGen};

#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    /// Index of the first query.
    pub start: usize,
    pub template: Template,
    /// Predicate attributes, ascending. The first one is the selective one.
    pub attrs: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct WorkItem {
    pub phase: usize,
    pub query: Query,
    /// Drawn on attributes outside the phase's set.
    pub noise: bool,
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub phases: Vec<Phase>,
    pub items: Vec<WorkItem>,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// `n` distinct predicate attributes, ascending, avoiding the last
/// attribute (the one updates increment) and `avoid`.
fn draw_attrs<R: Rng>(p: usize, n: usize, avoid: &[usize], rng: &mut R) -> Vec<usize> {
    let pool: Vec<usize> = (1..p).filter(|a| !avoid.contains(a)).collect();
    let mut out: Vec<usize> = sample(rng, pool.len(), n.min(pool.len())).into_iter().map(|i| pool[i]).collect();
    out.sort_unstable();
    out
}

pub fn generate_workload(cfg: &BenchConfig) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0071_0ad5);
    let mut gen = QueryGen::new(cfg, &mut rng);
    let p = gen.attributes();
    let width = cfg.templates.iter().map(|t| arity(*t)).max().unwrap_or(1).max(2);
    let periodic: Vec<Vec<usize>> = (0..cfg.period).map(|_| draw_attrs(p, width, &[], &mut rng)).collect();

    let n_phases = cfg.queries / cfg.phase_length;
    let mut phases = Vec::with_capacity(n_phases);
    let mut items = Vec::with_capacity(cfg.queries);
    let mut update_attr: Option<usize> = None;
    for ph in 0..n_phases {
        let template = match cfg.phase_order {
            PhaseOrder::Cyclic => cfg.templates[ph % cfg.templates.len()],
            PhaseOrder::Random => cfg.templates[rng.random_range(0..cfg.templates.len())],
        };
        let attrs = if periodic.is_empty() { draw_attrs(p, width, &[], &mut rng) } else { periodic[ph % cfg.period].clone() };
        if template.kind() == QueryKind::Scan || update_attr.is_none() {
            update_attr = Some(attrs[0]);
        }
        let start = ph * cfg.phase_length;
        for _ in 0..cfg.phase_length {
            let item = if rng.random::<f64>() < cfg.mixture.write_fraction() {
                let q = gen.query(Template::LowU, &[update_attr.expect("set above")], &mut rng);
                WorkItem { phase: ph, query: q, noise: false }
            } else if template.kind() == QueryKind::Scan && rng.random::<f64>() < cfg.noise {
                let other = draw_attrs(p, width, &attrs, &mut rng);
                WorkItem { phase: ph, query: gen.query(template, &other, &mut rng), noise: true }
            } else {
                WorkItem { phase: ph, query: gen.query(template, &attrs, &mut rng), noise: false }
            };
            items.push(item);
        }
        phases.push(Phase { start, template, attrs });
    }
    Workload { phases, items }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mixture;
    use proptest::prelude::*;

    fn base() -> BenchConfig {
        BenchConfig { scale: 1000, queries: 1000, phase_length: 100, ..BenchConfig::default() }
    }

    #[test]
    fn ten_phases_of_equal_length() {
        let cfg = BenchConfig { queries: 5000, phase_length: 500, ..base() };
        let w = generate_workload(&cfg);
        assert_eq!(w.phases.len(), 10);
        assert_eq!(w.len(), 5000);
        assert!(w.phases.iter().enumerate().all(|(i, p)| p.start == i * 500));
    }

    #[test]
    fn read_only_has_no_mutators() {
        let w = generate_workload(&base());
        assert!(w.items.iter().all(|i| i.query.kind() == QueryKind::Scan));
    }

    #[test]
    fn mixture_shares() {
        for (m, want) in [(Mixture::ReadHeavy, 0.1), (Mixture::Balanced, 0.5), (Mixture::WriteHeavy, 0.9)] {
            let w = generate_workload(&BenchConfig { mixture: m, queries: 4000, ..base() });
            let share = w.items.iter().filter(|i| i.query.kind().is_mutator()).count() as f64 / 4000.0;
            assert!((share - want).abs() < 0.03, "{m:?}: {share}");
            let on_phase = w
                .items
                .iter()
                .filter(|i| i.query.template == Template::LowU)
                .all(|i| i.query.tables[0].predicate.conjuncts[0].attr == w.phases[i.phase].attrs[0]);
            assert!(on_phase);
        }
    }

    #[test]
    fn noise_uses_other_attributes() {
        let w = generate_workload(&BenchConfig { noise: 0.05, queries: 4000, ..base() });
        let noisy: Vec<_> = w.items.iter().filter(|i| i.noise).collect();
        let share = noisy.len() as f64 / 4000.0;
        assert!((share - 0.05).abs() < 0.015, "{share}");
        for i in noisy {
            let attrs = &w.phases[i.phase].attrs;
            assert!(i.query.tables[0].predicate.conjuncts.iter().all(|c| !attrs.contains(&c.attr)));
        }
    }

    #[test]
    fn periodic_and_cyclic() {
        let cfg = BenchConfig {
            period: 2,
            phase_order: PhaseOrder::Cyclic,
            templates: vec![Template::LowS, Template::LowS, Template::Ins],
            ..base()
        };
        let w = generate_workload(&cfg);
        for (i, ph) in w.phases.iter().enumerate() {
            assert_eq!(ph.attrs, w.phases[i % 2].attrs);
            assert_eq!(ph.template, cfg.templates[i % 3]);
        }
        assert_ne!(w.phases[0].attrs, w.phases[1].attrs);
    }

    #[test]
    fn updates_in_insert_phases_follow_the_last_scan_phase() {
        let cfg = BenchConfig {
            mixture: Mixture::ReadHeavy,
            phase_order: PhaseOrder::Cyclic,
            templates: vec![Template::LowS, Template::LowS, Template::Ins],
            queries: 300,
            ..base()
        };
        let w = generate_workload(&cfg);
        let lead = w.phases[1].attrs[0];
        let ups: Vec<_> = w.items[200..].iter().filter(|i| i.query.template == Template::LowU).collect();
        assert!(!ups.is_empty());
        assert!(ups.iter().all(|i| i.query.tables[0].predicate.conjuncts[0].attr == lead));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn templates_change_only_at_phase_boundaries(seed in 0u64..1000, l in 1usize..6, n in 1usize..6) {
            let cfg = BenchConfig {
                seed,
                queries: l * 10 * n,
                phase_length: l * 10,
                templates: vec![Template::LowS, Template::ModS, Template::Ins],
                ..base()
            };
            let w = generate_workload(&cfg);
            prop_assert_eq!(w.len(), cfg.queries);
            for i in 1..w.len() {
                if w.items[i].query.template != w.items[i - 1].query.template {
                    prop_assert_eq!(i % cfg.phase_length, 0);
                }
            }
            let again = generate_workload(&cfg);
            prop_assert!(w.items.iter().zip(&again.items).all(|(a, b)| a.query == b.query));
        }
    }
}
