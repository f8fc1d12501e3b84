//! Synthetic tables: a timestamp column plus Zipf-distributed integers.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use tidemark::exec::{Database, Template};
use tidemark::monitor::Monitor;
use tidemark::storage::{Attribute, Schema, Value};

use crate::config::BenchConfig;

/// Largest attribute value; values are drawn from `[1, DOMAIN]`.
pub const DOMAIN: u64 = 1_000_000;
/// First timestamp; later rows count up from here.
pub const EPOCH_BASE: Value = 1_600_000_000;

pub const FACT_TABLE: &str = "r";
pub const JOIN_TABLE: &str = "s";

pub fn schema(name: &str, p: usize) -> Schema {
    let mut attrs = vec![Attribute::timestamp("a0")];
    attrs.extend((1..=p).map(|i| Attribute::int4(format!("a{i}"))));
    Schema::new(name, attrs).expect("generated names are unique")
}

/// Tables the configuration needs.
pub fn table_names(cfg: &BenchConfig) -> Vec<&'static str> {
    if cfg.templates.contains(&Template::HighS) {
        vec![FACT_TABLE, JOIN_TABLE]
    } else {
        vec![FACT_TABLE]
    }
}

fn rows(cfg: &BenchConfig, table: usize) -> Vec<Vec<Value>> {
    let p = cfg.width.attributes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x5eed_da7a + table as u64));
    let zipf = Zipf::new(DOMAIN as f64, cfg.skew).expect("validated skew");
    (0..cfg.scale)
        .map(|i| {
            let mut row = Vec::with_capacity(p + 1);
            row.push(EPOCH_BASE + i as Value);
            row.extend((0..p).map(|_| zipf.sample(&mut rng) as Value));
            row
        })
        .collect()
}

/// A fresh database holding the configured tables, analyzed.
pub fn generate_data(cfg: &BenchConfig) -> tidemark::Result<Arc<Database>> {
    let db = Arc::new(Database::with_monitor(cfg.page_capacity, Monitor::new(cfg.window)));
    db.set_vbp_population(cfg.vbp_population.into());
    for (i, name) in table_names(cfg).into_iter().enumerate() {
        let t = db.create_table(schema(name, cfg.width.attributes()))?;
        const CHUNK: usize = 10_000;
        let all = rows(cfg, i);
        for chunk in all.chunks(CHUNK) {
            t.insert_batch(chunk)?;
        }
    }
    db.analyze_all()?;
    Ok(db)
}
