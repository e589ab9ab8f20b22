use std::path::{Path, PathBuf};
use thiserror::Error;

/// Error categories shared across the workspace.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector/matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value violates its documented range or combination rules.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The oracle's query budget is spent; carries the number of queries consumed.
    #[error("query budget exhausted after {used} queries")]
    BudgetExhausted { used: u64 },

    /// Classifier training did not reach the required accuracy floor.
    #[error("training failed: {0}")]
    Training(String),

    /// An operation was called outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// The request exceeds what this implementation can do (e.g. grid dimension).
    #[error("capability exceeded: {0}")]
    Capability(String),

    /// A loss or statistic became NaN/Inf; the run is aborted rather than continued.
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A result file exists but cannot be decoded.
    #[error("{}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn malformed(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.as_ref().to_path_buf(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
