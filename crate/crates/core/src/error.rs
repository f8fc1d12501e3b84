use thiserror::Error;

use crate::pindex::Scheme;
use crate::storage::Location;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("table `{0}` already exists")]
    DuplicateTable(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("expected {expected} values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("value {value} does not fit attribute `{attr}`")]
    ValueOutOfRange { attr: String, value: i64 },
    #[error("version at {0} is no longer live")]
    StaleUpdate(Location),
    #[error("no version stored at {0}")]
    InvalidLocation(Location),
    #[error("invalid index spec: {0}")]
    InvalidIndexSpec(String),
    #[error("index {0} already exists")]
    DuplicateIndex(String),
    #[error("operation needs a {expected} index, got {actual}")]
    WrongScheme { expected: &'static str, actual: Scheme },
    #[error("empty key interval")]
    EmptyInterval,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("plan does not fit query: {0}")]
    PlanMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse tree: {0}")]
    TreeParse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
