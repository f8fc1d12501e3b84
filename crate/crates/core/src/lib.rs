//! Embedded in-memory table store with incrementally built indexes.
//!
//! Tables are append-only and epoch-versioned ([`storage`]). Indexes can be
//! used while they are still being populated ([`pindex`], [`exec`]), and a
//! background tuner ([`tuner`]) decides which ones to build or drop based on
//! the monitored workload and forecast utility.

pub mod classifier;
pub mod error;
pub mod exec;
pub mod forecaster;
pub mod monitor;
pub mod pindex;
pub mod planner;
pub mod storage;
pub mod tuner;

pub use error::{Error, Result};
