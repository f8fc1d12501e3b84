//! Labeled workload snapshots for classifier training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tidemark::classifier::{Label, LabeledSnapshot};
use tidemark::tuner::{Frequency, Tuner};

use crate::config::{BenchConfig, Mixture};
use crate::data::generate_data;
use crate::harness::classifier;
use crate::workload::generate_workload;
use crate::BenchError;

pub fn label_of(m: Mixture) -> Label {
    match m {
        Mixture::ReadOnly | Mixture::ReadHeavy => Label::ReadIntensive,
        Mixture::Balanced | Mixture::WriteHeavy => Label::WriteIntensive,
    }
}

/// `per_mixture` disjoint monitor windows of every mixture, executed with
/// the tuner running so the index-access feature varies.
pub fn labeled_snapshots(base: &BenchConfig, per_mixture: usize) -> Result<Vec<LabeledSnapshot>, BenchError> {
    let mut out = Vec::with_capacity(per_mixture * Mixture::ALL.len());
    for (i, m) in Mixture::ALL.into_iter().enumerate() {
        let queries = per_mixture * base.window;
        let cfg = BenchConfig {
            mixture: m,
            queries,
            phase_length: base.window * 5,
            frequency: Frequency::EveryQueries(base.window as u64 / 2),
            seed: base.seed.wrapping_add(i as u64),
            ..base.clone()
        };
        let cfg = BenchConfig { queries: queries.div_ceil(cfg.phase_length) * cfg.phase_length, ..cfg };
        let db = generate_data(&cfg)?;
        let w = generate_workload(&cfg);
        let mut tuner = Tuner::new(db.clone(), cfg.tuner_config(), classifier(&cfg))?;
        let every = cfg.window / 2;
        for (idx, item) in w.items.iter().enumerate() {
            if idx > 0 && idx % every == 0 {
                tuner.cycle()?;
            }
            db.execute(&item.query)?;
            if (idx + 1) % cfg.window == 0 && out.len() < per_mixture * (i + 1) {
                let snap = db.monitor().snapshot();
                out.push(LabeledSnapshot { features: snap.features.as_array(), label: label_of(m) });
            }
        }
    }
    Ok(out)
}

/// Shuffles and splits off the last `test_share` of `samples`.
pub fn split(mut samples: Vec<LabeledSnapshot>, test_share: f64, seed: u64) -> (Vec<LabeledSnapshot>, Vec<LabeledSnapshot>) {
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = ((samples.len() as f64) * test_share).round() as usize;
    let cut = samples.len() - test.min(samples.len());
    let held = samples.split_off(cut);
    (samples, held)
}
