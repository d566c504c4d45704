use thiserror::Error;

/// Errors raised by the solvers and assemblers in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// `∂vvL` is not positive definite at a visited point.
    #[error("Lagrangian is not strictly convex in v at t = {t}: smallest eigenvalue of dvv is {min_eig:e}")]
    NonConvexPoint { t: f64, min_eig: f64 },

    #[error("point outside the declared domain: {0}")]
    DomainError(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation not supported for boundary class `{0}`")]
    UnsupportedBoundary(&'static str),

    #[error("state norm {norm:e} exceeded the blow-up bound at t = {t}")]
    BlowUp { t: f64, norm: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The shooting Jacobian lost rank. At a nullity point of the second
    /// variation this is expected and marks a degenerate branch point.
    #[error("shooting Jacobian is rank deficient (singular value ratio {ratio:e})")]
    SingularShooting { ratio: f64 },

    #[error("trajectory residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },

    #[error("Gram matrix is ill conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("index jump lost between lambda = {lo} and lambda = {hi}")]
    LostJump { lo: f64, hi: f64 },

    #[error("perturbation Hessian is not sign definite on the kernel")]
    IndefiniteRestriction,

    #[error("restricted derivative form is degenerate on the kernel (smallest |eigenvalue| {min_abs:e})")]
    DegenerateQ { min_abs: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
