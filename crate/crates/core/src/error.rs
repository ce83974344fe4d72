use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integral diverges: {0}")]
    Divergence(String),

    #[error("non-finite integrand value {value} at node {node:?}")]
    EvaluationFailure { node: Vec<f64>, value: f64 },

    #[error("wrong operation: {0}")]
    WrongOperation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no feasible point: {0}")]
    Infeasible(String),

    #[error("unreliable estimate: {0}")]
    Unreliable(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
