use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by sketches, datasets, boosting, and the federation protocol.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value {0}: sketch insertions must be finite")]
    InvalidValue(f64),
    #[error("incompatible sketches: relative error {left} vs {right}")]
    IncompatibleSketch { left: f64, right: f64 },
    #[error("quantile query on an empty sketch")]
    EmptySketch,
    #[error("{name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("unsupported serialization format: {0}")]
    Format(String),

    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("{path}, row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),
    #[error("unsupported partition scheme: {0}")]
    UnsupportedScheme(String),

    #[error("shape mismatch: expected {expected} features, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("federation has no training rows")]
    EmptyFederation,
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("party {party} timed out after {seconds:.1}s")]
    Timeout { party: u32, seconds: f64 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("party {party} reported an error ({code}): {detail}")]
    Party {
        party: u32,
        code: String,
        detail: String,
    },
    #[error("transport error: {0}")]
    Transport(String),

    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
