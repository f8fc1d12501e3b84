//! Workload generation and the benchmark harness for the tidemark tuner.

pub mod config;
pub mod data;
pub mod harness;
pub mod queries;
pub mod training;
pub mod workload;

pub use config::{BenchConfig, ConfigError};
pub use harness::{run, run_bare, run_once, RunMetrics};
pub use workload::{generate_workload, Workload};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] tidemark::Error),
    #[error("query {0}: result differs from the table-scan reference")]
    Mismatch(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
