use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative noise level {0}")]
    NegativeNoiseLevel(f64),

    #[error("negative second-moment entry {value} at coordinate {index}")]
    NegativeSecondMoment { index: usize, value: f64 },

    #[error("non-positive preconditioner entry {value} at coordinate {index}")]
    NonPositivePreconditioner { index: usize, value: f64 },

    #[error("non-finite gradient entry at coordinate {index} (step {step})")]
    NonFiniteGradient { index: usize, step: u64 },

    #[error("run diverged: non-finite state at step {step} (optimizer {optimizer}, lr {lr})")]
    Diverged {
        step: u64,
        optimizer: String,
        lr: f64,
    },

    #[error("stepsize cap violated: alpha {alpha} exceeds {cap} ({context})")]
    StepsizeCap {
        alpha: f64,
        cap: f64,
        context: &'static str,
    },

    #[error("invalid step-decay plan: {0}")]
    InvalidDecayPlan(String),

    #[error("weight index out of range: k={k}, t={t}")]
    WeightIndexOutOfRange { k: u64, t: u64 },

    #[error("empty feasible stepsize range ({0})")]
    EmptyFeasibleRange(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv schema mismatch: {0}")]
    CsvSchema(String),
}

pub type Result<T> = std::result::Result<T, Error>;
