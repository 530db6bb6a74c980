use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("growth fit failed: {0}")]
    FitFailed(String),

    #[error("contour not found along direction {direction}")]
    ContourNotFound { direction: usize },

    #[error("drift-ratio integrand is not finite at the evaluation point")]
    QuadratureOverflow,

    #[error("no drift certificate found: {0}")]
    NoDriftFound(String),

    #[error("drift function overflowed at step {step}")]
    OverflowHalt { step: usize },

    #[error("trace too short: {0}")]
    TooShort(String),

    #[error("grid does not cover the target: boundary mass {0:e}")]
    GridCoverage(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
