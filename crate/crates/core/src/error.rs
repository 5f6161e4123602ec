use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid carrier profile: {0}")]
    InvalidProfile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no non-degenerate geometry found after {attempts} draws")]
    SamplingBudgetExhausted { attempts: usize },

    #[error("degenerate static pair ({first}, {second}): |denominator| = {denominator:e}")]
    DegeneratePair {
        first: usize,
        second: usize,
        denominator: f64,
    },

    #[error("no heading branch yields a non-negative receiver speed")]
    BranchInconsistency,

    #[error("all static pairs are degenerate; estimation infeasible")]
    EstimationInfeasible,

    #[error("non-finite residual at iteration {iteration}: theta = {theta:?}")]
    NonFiniteResidual { iteration: usize, theta: [f64; 3] },

    #[error("tap delay of {delay_samples} samples is outside [0, {capacity}]")]
    DelayBeyondBuffer { delay_samples: f64, capacity: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("paths {first} and {second} resolve to the same delay bin")]
    UnresolvablePaths { first: usize, second: usize },

    #[error("path {path} below detection threshold at frame {frame}")]
    PathMissing { frame: usize, path: usize },

    #[error("{failed} of {total} trials failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("empty cell")]
    EmptyCell,

    #[error("malformed panel file: {0}")]
    PanelFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
