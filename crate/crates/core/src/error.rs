//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("EmptySample: sample contains no rows")]
    EmptySample,
    #[error("InvalidSample: {0}")]
    InvalidSample(String),
    #[error("DimensionMismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("NotSymmetric: matrix is not symmetric within tolerance")]
    NotSymmetric,
    #[error("NotPositiveDefinite: matrix is not positive semidefinite after jitter escalation")]
    NotPositiveDefinite,
    #[error("NonFiniteData: {0}")]
    NonFiniteData(String),
    #[error("DegenerateSample: {0}")]
    DegenerateSample(String),
    #[error("NotNormalized: density integrates to {integral} on the grid, expected 1 +/- {tolerance}")]
    NotNormalized { integral: f64, tolerance: f64 },
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
    #[error("SimulatorProtocolError: {0}")]
    SimulatorProtocol(String),
    #[error("EmptyData: {0}")]
    EmptyData(String),
    #[error("ColumnCountMismatch: row {row} has {got} fields, expected {expected}")]
    ColumnCountMismatch {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("ParseError: {0}")]
    Parse(String),
    #[error("GridMismatch: {0}")]
    GridMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
