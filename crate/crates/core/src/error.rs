use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("vector is not in the range of the constraint map (imbalance {imbalance:e})")]
    RangeViolation { imbalance: f64 },

    #[error("zero diagonal entry {index} in preconditioner")]
    ZeroPivot { index: usize },

    #[error("invalid setting: {0}")]
    InvalidSettings(String),

    #[error("line search failed after {backtracks} backtracks at iteration {iteration}")]
    LineSearchFailed { iteration: usize, backtracks: usize },

    #[error("projection is not converged enough (eta = {eta:e}, need <= {required:e})")]
    Unconverged { eta: f64, required: f64 },

    #[error("inner conjugate gradient did not converge (relative residual {relres:e})")]
    InnerSolve { relres: f64 },

    #[error("operator failed the positive semidefinite self-check (<X, QX> = {value:e})")]
    NotPsd { value: f64 },

    #[error("eigendecomposition failed")]
    Eigen,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
