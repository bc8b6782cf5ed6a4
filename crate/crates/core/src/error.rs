use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid factor family: {0}")]
    InvalidFamily(String),

    #[error("argument out of domain: {0}")]
    OutOfDomain(String),

    #[error("no root in bracket: {0}")]
    NoRoot(String),

    #[error("E|log W| is infinite")]
    InfiniteMean,

    #[error("operation not supported for this family: {0}")]
    Unsupported(String),

    #[error("ball count {requested} exceeds capacity {capacity}")]
    CapacityExceeded { requested: u64, capacity: u64 },

    #[error("environment exhausted: {0}")]
    InsufficientEnvironment(String),

    #[error("grid too fine: {steps} steps requested, limit {limit}")]
    GridTooFine { steps: u64, limit: u64 },

    #[error("grid too coarse near the level crossing (undershoot {undershoot:e}, step {step:e})")]
    GridTooCoarse { undershoot: f64, step: f64 },

    #[error("path never exceeds level {0}")]
    NotCovered(f64),

    #[error("covariance matrix not positive semidefinite after jitter {0:e}")]
    NotPsd(f64),

    #[error("too few samples: got {got}, need {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("fewer than two bins remain after merging")]
    DegenerateBins,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid config at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}
