use thiserror::Error;

/// Errors produced by construction, sampling, integration, and solving.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("derivative order {requested} exceeds stored maximum {max}")]
    OrderOutOfRange { requested: usize, max: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite sample at node {node} (t = {t})")]
    NonFiniteSample { node: usize, t: f64 },

    #[error("integration blew up at node {node} (t = {t})")]
    NonFiniteState { node: usize, t: f64 },

    #[error("t = {t} is not a grid node")]
    NotAGridNode { t: f64 },

    #[error("invalid exponent p = {0}; need 1 <= p <= infinity")]
    InvalidExponent(f64),

    #[error("problem is not well posed (sigma_min = {sigma_min:.3e}, sigma_max = {sigma_max:.3e})")]
    NotWellPosed { sigma_min: f64, sigma_max: f64 },

    #[error("least-squares fit is ill-conditioned at degree {degree}")]
    IllConditionedFit { degree: usize },

    #[error("invalid step function: {0}")]
    InvalidStep(String),

    #[error("invalid parameter family: {0}")]
    InvalidFamily(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),
}

pub type Result<T> = std::result::Result<T, Error>;
