use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and the closed-form analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample interval too coarse: {0}")]
    Resolution(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("usage: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
