use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EcvError>;

#[derive(Debug, Error)]
pub enum EcvError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("out-of-bag set exhausted: {0}")]
    OobExhausted(String),

    #[error("tuning failed: {0}")]
    TuningFailed(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl EcvError {
    /// Stable machine-readable class name, used by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            EcvError::InvalidParameter(_) => "invalid-parameter",
            EcvError::Numeric(_) => "numeric",
            EcvError::DimensionMismatch { .. } => "dimension-mismatch",
            EcvError::DivisionByZero(_) => "division-by-zero",
            EcvError::Parse { .. } => "parse",
            EcvError::Io { .. } => "io",
            EcvError::OobExhausted(_) => "oob-exhausted",
            EcvError::TuningFailed(_) => "tuning-failed",
            EcvError::Serialization(_) => "serialization",
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        EcvError::InvalidParameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EcvError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for EcvError {
    fn from(err: serde_json::Error) -> Self {
        EcvError::Serialization(err.to_string())
    }
}
