use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected} samples, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-positive conformal factor {value} at node {index} (r = {r})")]
    Positivity { index: usize, r: f64, value: f64 },

    #[error("non-finite value at node {index} (r = {r})")]
    NonFinite { index: usize, r: f64 },

    #[error("weighted norm of order {0} is not supported (k <= 2)")]
    UnsupportedOrder(usize),

    #[error("invalid Lebesgue exponent q = {0} (need q >= 1)")]
    InvalidExponent(f64),

    #[error("radius {r} outside the sampled interval ({lo}, {hi})")]
    Range { r: f64, lo: f64, hi: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("positivity lost at node {index} (r = {r}, value {value:e})")]
    PositivityLost { index: usize, r: f64, value: f64 },

    #[error("explicit step dt = {dt:e} exceeds the stability limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("step failed at t = {t}: {source}")]
    StepFailed {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("solve on exhaustion domain {m} failed: {source}")]
    Exhaustion {
        m: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_time(self, t: f64) -> Error {
        match self {
            e @ Error::StepFailed { .. } => e,
            e => Error::StepFailed {
                t,
                source: Box::new(e),
            },
        }
    }
}
