use thiserror::Error;

/// Errors produced by the numerical kernels, the task runtime and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Cholesky pivot at `index` (global row/column) was not strictly positive.
    #[error("matrix is not positive definite (non-positive pivot at index {index})")]
    NotPositiveDefinite { index: usize },
    #[error("singular triangular factor (zero diagonal at index {index})")]
    Singular { index: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
