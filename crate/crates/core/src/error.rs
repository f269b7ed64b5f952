use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HoistError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HoistError {
    #[error("invalid search space: parameter `{param}`: {reason}")]
    InvalidSpace { param: String, reason: String },

    #[error("space file: {0}")]
    SpaceFile(String),

    #[error("cannot encode parameter `{param}`: {reason}")]
    Encoding { param: String, reason: String },

    #[error("rejected evaluation of configuration {config_id}: {reason}")]
    RejectedRecord { config_id: u64, reason: String },

    #[error("invalid bracket setup: {0}")]
    InvalidSchedule(String),

    #[error("cannot fit surrogate: {0}")]
    Fit(String),

    #[error("ensemble unusable; fall back to random sampling")]
    EnsembleUnusable,

    #[error("insufficient complete data: {0} records in the full-resource stage, need at least 2")]
    InsufficientCompleteData(usize),

    #[error("correlation: {0}")]
    Correlation(String),

    #[error("run aborted: {0}")]
    Aborted(String),

    #[error("history: {0}")]
    History(String),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HoistError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HoistError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Why a single objective evaluation produced no usable loss.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("evaluation timed out after {0:.3}s")]
    Timeout(f64),
    #[error("non-finite loss {0}")]
    NonFinite(String),
    #[error("process exited with {0}")]
    ExitStatus(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("{0}")]
    Other(String),
}
