use thiserror::Error;

/// Errors produced by the truncated model, the index computations and the
/// solvers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid truncation: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: expected {expected}, got {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("threshold {threshold} lies on the spectrum: eigenvalue {eigenvalue} is within {window:e}")]
    ThresholdOnSpectrum {
        threshold: f64,
        eigenvalue: f64,
        window: f64,
    },

    #[error("perturbation leaves the spectral gap ({lower}, {upper}): eigenvalue {eigenvalue}")]
    GapViolation {
        lower: f64,
        upper: f64,
        eigenvalue: f64,
    },

    #[error("degenerate endpoint t = {t}: eigenvalue {eigenvalue} inside the kernel window; perturb the endpoint")]
    DegenerateEndpoint { t: f64, eigenvalue: f64 },

    #[error("columns are not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("fixed point iteration did not contract: {iterations} iterations, last update {last_update:e}")]
    NonContraction { iterations: usize, last_update: f64 },

    #[error("non-finite value {value} at grid node (x = {x}, t = {t}, u = {u})")]
    NonFinite { x: f64, t: f64, u: f64, value: f64 },

    #[error("adaptive quadrature did not converge on [0, {upper}] (error estimate {estimate:e})")]
    Quadrature { upper: f64, estimate: f64 },

    #[error("missing parameters: {}", .0.join(", "))]
    MissingParameters(Vec<String>),

    #[error("nonlinearity has no comparison field `{0}`")]
    MissingComparisonField(String),

    #[error("hypothesis {condition} fails: {detail}")]
    HypothesisFailure { condition: String, detail: String },

    #[error("solution path left the ball of radius {radius} (norm {norm}) at lambda = {lambda}")]
    BoundednessViolation { radius: f64, norm: f64, lambda: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
