use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sector dimension {dim} exceeds the configured budget of {budget} states")]
    Capacity { dim: usize, budget: usize },

    #[error("empty basis: nothing to assemble")]
    EmptyBasis,

    #[error("basis/parameter mismatch: {0}")]
    BasisMismatch(String),

    #[error("eigensolver failed: {0}")]
    NonConvergence(String),

    #[error("eigenpair residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("trim would leave an empty spectrum ({len} levels, low {low}, high {high})")]
    EmptyTrim { len: usize, low: f64, high: f64 },

    #[error("need at least {needed} levels, got {got}")]
    TooFewLevels { needed: usize, got: usize },

    #[error("ill-conditioned unfolding fit: {0}")]
    IllConditioned(String),

    #[error("unfolding map is not monotone near E = {at}")]
    NonMonotoneUnfolding { at: f64 },

    #[error("classical state leaves the spin domain (eta = {eta})")]
    DomainViolation { eta: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("energy {energy} is not attainable: {reason}")]
    UnattainableEnergy { energy: f64, reason: String },

    #[error("curves are not invertible on a shared range: {0}")]
    NotInvertible(String),

    #[error("rescaled control ranges do not overlap")]
    NoOverlap,

    #[error("optimizer did not converge: {0}")]
    Optimizer(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
