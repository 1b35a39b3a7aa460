use thiserror::Error;

/// Errors raised by the geometry routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {point:?} lies outside the generator domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("segment leaves the domain at t = {exit_parameter}")]
    SegmentLeavesDomain { exit_parameter: f64 },

    #[error("Legendre inversion failed after {iterations} iterations (residual {residual:e})")]
    InversionFailure { iterations: usize, residual: f64 },

    #[error("Hessian is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    ConvexityViolation { min_eigenvalue: f64 },

    #[error("metric declared Riemannian is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    IndefiniteMetric { min_eigenvalue: f64 },

    #[error("fundamental matrix is singular or ill-conditioned at {point:?}")]
    DegenerateMetric { point: Vec<f64> },

    #[error("integration produced a non-finite state after t = {last_time}")]
    IntegrationFailure { last_time: f64 },

    #[error("negative squared speed {value:e} under a pseudo-Riemannian metric; classify the tangent first")]
    Signature { value: f64 },

    #[error("operation requires a Riemannian (positive definite) metric")]
    NotRiemannian,

    #[error("shooting did not connect the endpoints (residual {residual:e})")]
    Unreachable { residual: f64 },

    #[error("projection failed: {reason} (gradient norm {gradient_norm:e})")]
    ProjectionFailure {
        reason: String,
        best: Vec<f64>,
        gradient_norm: f64,
    },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
