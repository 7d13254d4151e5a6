use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter fails validation (range, positivity, consistency).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// The iterate series stopped contracting; the anisotropy parameter is
    /// outside the range where the fixed-point construction is valid.
    #[error("series contraction failure: measured ratio {ratio} exceeds 1/2")]
    ContractionFailure { ratio: f64 },

    /// A profile build finished but its self-check residual is too large.
    #[error("profile build residual {residual:e} exceeds tolerance {tol:e}")]
    BuildFailure { residual: f64, tol: f64 },

    /// A quadrature or iterative routine could not reach the requested accuracy.
    #[error("accuracy failure: achieved {achieved:e}, requested {requested:e}")]
    Accuracy { requested: f64, achieved: f64 },

    /// The radial oscillation dropped below the guard radius.
    #[error("collision guard triggered: radius {phi} at t = {t}")]
    CollisionGuard { phi: f64, t: f64 },

    /// An iterative solver ran out of iterations.
    #[error("no convergence: {0}")]
    NoConverge(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
