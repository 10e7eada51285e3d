//! Error type shared across the engine.

use std::path::PathBuf;

/// Everything that can go wrong in the engine, grouped by what the caller can
/// do about it.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar argument is out of its documented range.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Tensor shapes do not satisfy an operation's contract.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An object was used out of order (backward without forward, optimizer
    /// state built for different parameters, empty confusion matrix).
    #[error("invalid state: {0}")]
    State(String),

    /// A label index or a one-hot row is malformed.
    #[error("invalid label: {0}")]
    Label(String),

    /// A run configuration is internally inconsistent.
    #[error("invalid config: {0}")]
    Config(String),

    /// Batch normalization cannot compute statistics over a population of 1.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    /// A dataset directory or file could not be ingested.
    #[error("ingestion failed for {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    /// A split request cannot be satisfied.
    #[error("split failed: {0}")]
    Split(String),

    /// A weights file is malformed; names the offending tensor when known.
    #[error("weight format error{}: {reason}", tensor.as_ref().map(|t| format!(" at tensor '{t}'")).unwrap_or_default())]
    Format {
        tensor: Option<String>,
        reason: String,
    },

    /// A self-check (gradient suite, golden summary) did not pass.
    #[error("check failed: {0}")]
    Check(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn ingest(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Ingest {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn format_at(tensor: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            tensor: Some(tensor.into()),
            reason: reason.into(),
        }
    }

    pub fn format(reason: impl Into<String>) -> Self {
        Error::Format {
            tensor: None,
            reason: reason.into(),
        }
    }
}
