use thiserror::Error;

/// Errors produced by the optimization toolkit.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid control setting: {0}")]
    InvalidControl(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("correlation matrix is not positive definite (lambda = {lambda:e})")]
    SingularCorrelation { lambda: f64 },

    #[error("rank-deficient model basis; deficient terms: {}", terms.join(", "))]
    RankDeficient { terms: Vec<String> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("budget of {fun_evals} evaluations cannot cover the initial design of {required}")]
    InfeasibleBudget { fun_evals: usize, required: usize },

    #[error("no non-duplicate candidate found after {0} uniform draws")]
    DuplicatesExhausted(usize),

    #[error("objective seed requested but seedFun is not set")]
    NoSeed,

    #[error("model fit failed: {0}")]
    ModelFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
