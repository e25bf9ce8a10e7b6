use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: configuration, incompatible data, rank mismatch.
    #[error("validation: {0}")]
    Validation(String),
    /// Geometric precondition failed (signature, causal character of S or C).
    #[error("geometry: {0}")]
    Geometry(String),
    /// Numerical failure at run time (NaN, non-contraction, degenerate Jacobian).
    #[error("numerical: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}

pub(crate) fn geometry<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Geometry(msg.into()))
}

pub(crate) fn numerical<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Numerical(msg.into()))
}
