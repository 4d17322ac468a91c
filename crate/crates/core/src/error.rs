use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("potential is only defined when n divides m (n = {n}, m = {m})")]
    NonIntegralAverage { n: usize, m: u64 },

    #[error("cannot sample from an empty weight set")]
    EmptyWeights,

    #[error("weight of index {index} would drop below zero ({weight} + {delta})")]
    WeightUnderflow {
        index: usize,
        weight: u64,
        delta: i64,
    },

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),

    #[error("bin {0} is empty and cannot act as a source")]
    EmptySource(usize),

    #[error("move {src} -> {dst} is not destructive (loads {src_load} -> {dst_load})")]
    NotDestructive {
        src: usize,
        dst: usize,
        src_load: u64,
        dst_load: u64,
    },

    #[error("adversary emitted a non-destructive move at event {event}: {detail}")]
    AdversaryViolation { event: u64, detail: String },

    #[error("coupling lost closeness: {0}")]
    ClosenessViolation(String),

    #[error("state space for n = {n}, m = {m} exceeds limit of {limit} states")]
    StateLimit { n: usize, m: u64, limit: usize },

    #[error("linear system is singular at pivot {0}")]
    Singular(usize),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("degenerate regression: {0}")]
    DegenerateFit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
