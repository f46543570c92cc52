use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A row of a CoNLL-U document could not be read.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Head links do not form a single rooted tree.
    #[error("invalid dependency tree: {0}")]
    Structure(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    /// Malformed mask TSV or other tabular text.
    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A forward operation produced NaN or infinity.
    #[error("non-finite value produced by {op}")]
    Numeric { op: String },

    /// Analytic and finite-difference gradients disagree.
    #[error("gradient check failed: {0}")]
    GradientMismatch(String),

    /// Caller violated an API contract (e.g. backward on a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Inconsistent or invalid input data.
    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
