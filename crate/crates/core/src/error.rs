//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or wiring mismatch between pieces of data that are supposed
    /// to be composable (category sizes, adjacency shapes, block shapes).
    #[error("structural mismatch: {0}")]
    Structure(String),

    /// Input data violates a mathematical invariant (positivity, unitarity,
    /// trace condition, ...). Carries the worst offending residual when
    /// meaningful.
    #[error("validation failure: {0}")]
    Validation(String),

    /// An iterative procedure ran out of budget.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// A hypothesis required by a theorem-backed routine does not hold, so
    /// the routine refuses to run rather than return garbage.
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    #[error("linear algebra backend error: {0}")]
    LinAlg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::LinAlg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
