use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    /// A dual subproblem has no solution along the current direction; a fresh
    /// phase initialization is the remedy.
    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),
    #[error("conic solver: {0}")]
    Conic(String),
    #[error("rank-one reconstruction: {0}")]
    Reconstruction(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl From<radcom_conic::ConicError> for SolverError {
    fn from(e: radcom_conic::ConicError) -> Self {
        SolverError::Conic(e.to_string())
    }
}
