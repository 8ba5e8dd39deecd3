//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by cohort handling, the network core, training, and the
/// evaluation drivers.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration or violated precondition.
    Config(String),
    /// Malformed or semantically invalid cohort/checkpoint data.
    Data(String),
    /// Tensor or signal shape mismatch.
    Shape(String),
    /// A NaN or infinity was produced or ingested; the message names where.
    NonFinite(String),
    /// An API contract was violated by the caller (e.g. unlabeled samples
    /// passed to the disease loss, stale unpool indices).
    Contract(String),
    /// Training aborted by the divergence guard.
    Diverged(String),
    /// Filesystem failure with the offending path.
    Io { path: String, source: std::io::Error },
    /// JSON (de)serialization failure with context.
    Json { context: String, source: serde_json::Error },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { context: context.into(), source }
    }

    /// True for errors a CLI should report as bad configuration (exit 1)
    /// rather than runtime failure (exit 2).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
            Error::Contract(m) => write!(f, "contract violation: {m}"),
            Error::Diverged(m) => write!(f, "training diverged: {m}"),
            Error::Io { path, source } => write!(f, "io error at {path}: {source}"),
            Error::Json { context, source } => write!(f, "json error ({context}): {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            Error::Json { source, .. } => Some(source),
            _ => None,
        }
    }
}
