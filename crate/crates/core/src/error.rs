use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by grid, operator, and solver routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A modelling assumption (integrability, monotonicity, data class) fails.
    #[error("assumption {assumption} violated: {detail}")]
    Assumption {
        assumption: &'static str,
        detail: String,
    },

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("solution blew up (non-finite value) at frame {frame}")]
    Blowup { frame: usize },

    #[error("invalid path function: {0}")]
    InvalidPath(String),
}
