use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum CtmdpError {
    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("time out of range: {0}")]
    TimeOutOfRange(String),

    #[error("stability violation: dt {dt} exceeds the monotone bound 1/(2M) with M = {rate_bound}")]
    StabilityViolation { dt: f64, rate_bound: f64 },

    #[error("non-finite value encountered at t = {t}, state {state}")]
    NonFiniteValue { t: f64, state: usize },

    #[error("thinning envelope violated: q_i(mu) = {exit_rate} > M = {rate_bound} at state {state}")]
    InvalidEnvelope {
        state: usize,
        exit_rate: f64,
        rate_bound: f64,
    },

    #[error("model has no Lyapunov data")]
    MissingLyapunov,

    #[error("complexity budget exceeded: {0}")]
    ComplexityBudgetExceeded(String),

    #[error("malformed policy: {0}")]
    MalformedPolicy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CtmdpError>;
