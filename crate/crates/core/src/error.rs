use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: Option<String>,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid value for `{key}`: {message}")]
    InvalidConfig { key: String, message: String },

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("missing outcome: {0}")]
    MissingOutcome(String),

    #[error("missing metadata: {0}")]
    MissingMetadata(String),

    #[error("positivity violation: {0}")]
    Positivity(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("artifact rejected: {0}")]
    Artifact(String),

    #[error("experiment aborted: {0}")]
    Aborted(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            expected,
            got,
            context: None,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input (files, configs, shapes)
    /// rather than by a failure while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::DimensionMismatch { .. }
                | Error::LengthMismatch(_)
                | Error::NonFinite(_)
                | Error::Empty(_)
                | Error::InvalidConfig { .. }
                | Error::InsufficientSamples { .. }
                | Error::MissingOutcome(_)
                | Error::MissingMetadata(_)
                | Error::Artifact(_)
        )
    }
}
