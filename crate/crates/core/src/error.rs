use thiserror::Error;

use crate::convex_core::SolveReport;

/// Errors raised while validating model inputs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid array configuration: {0}")]
    InvalidArray(String),
    #[error("invalid position vector: {0}")]
    InvalidPositions(String),
    #[error("invalid coverage regions: {0}")]
    InvalidCoverage(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Failures of the embedded convex solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("problem is infeasible (iterations: {})", .0.iterations)]
    Infeasible(SolveReport),
    #[error("numerical failure after {} iterations", .0.iterations)]
    NumericalFailure(SolveReport),
    #[error("iteration limit reached (gap {:.3e})", .0.duality_gap)]
    MaxIter(SolveReport),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("initial positions infeasible: {0}")]
    InfeasibleStart(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
