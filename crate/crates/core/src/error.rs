use thiserror::Error;

pub type Result<T> = std::result::Result<T, SbmError>;

#[derive(Debug, Error)]
pub enum SbmError {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error(
        "exhaustive search refused for n = {n} (limit {limit}); use the pseudo-likelihood fitter"
    )]
    EnumerationGuard { n: usize, limit: usize },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:.3e}, tolerance {tolerance:.3e})")]
    EigenNonConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SbmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SbmError::Validation(msg.into())
    }
}
