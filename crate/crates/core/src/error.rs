use thiserror::Error;

use crate::quad::QuadResult;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid signature: {0}")]
    InvalidSignature(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Evaluation at a point where a quantity is undefined (corner loci, zero arguments, poles).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contour degenerate: {0}")]
    ContourDegenerate(String),

    #[error("contour tuning failed after {steps} ladder steps")]
    TuningFailure { steps: usize },

    #[error("integrand factor {factor} nearly vanishes along a path (|value| = {magnitude:e})")]
    NonvanishingViolated { factor: usize, magnitude: f64 },

    #[error("quadrature did not converge: value {} err {:e} after {} evaluations", .0.value, .0.error_estimate, .0.evaluations)]
    NotConverged(QuadResult),

    #[error("exponent hint on axis {axis} has real part {re} <= -1")]
    HintViolation { axis: usize, re: f64 },

    #[error("parameters outside the convergent region: {0}")]
    NotInConvergentRegion(String),

    #[error("prefactor {magnitude:e} is below the conditioning floor {floor:e}")]
    PrefactorNearZero { magnitude: f64, floor: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
