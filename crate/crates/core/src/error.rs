use thiserror::Error;

/// Failures reported by the modelling, synthesis and identification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("pair (A, B) is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("Riccati iteration did not converge after {iterations} iterations (relative change {change:.3e})")]
    NotConverged { iterations: usize, change: f64 },

    #[error("actuation matrix is rank deficient: numerical rank {rank} of {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("degenerate field vector: {0}")]
    DegenerateField(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("least-squares problem is ill-conditioned (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("fit is non-physical: {0}")]
    NonPhysicalFit(String),

    #[error("malformed matrix file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
