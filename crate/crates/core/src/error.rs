use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("horizon mismatch: expected {expected}, got {got}")]
    HorizonMismatch { expected: usize, got: usize },

    #[error("ensemble size mismatch: {0} vs {1} paths")]
    SizeMismatch(usize, usize),

    #[error("ensemble of {n} paths exceeds the exact solver cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    /// Non-finite entries are rejected at construction.
    #[error("non-finite value at window index {index}")]
    NonFinite { index: usize },

    #[error("GARCH state must be nonnegative, got {0}")]
    NegativeState(f64),

    /// An operation requires a certificate that was not supplied or did not pass.
    #[error("not certified: {0}")]
    NotCertified(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
