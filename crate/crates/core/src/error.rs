use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition (dimension mismatch,
    /// wrong symbol count, invalid grid, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Numerically degenerate input (all-zero covariance, vanishing
    /// eigenvalue mean) for which the requested quantity is undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Network training failed (non-finite residuals, no accepted step).
    #[error("training failed: {0}")]
    Training(String),

    /// A model or frame file could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    /// Invalid experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
