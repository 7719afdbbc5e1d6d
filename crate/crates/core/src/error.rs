use thiserror::Error;
use wandcal_lp::{LpError, LpStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("marker {marker} is behind camera {camera} (depth {depth})")]
    BehindCamera { marker: usize, camera: usize, depth: f64 },
    #[error("camera {camera} observes {count} markers; at least {required} are needed")]
    InsufficientObservations { camera: usize, count: usize, required: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("LP subproblem at iteration {iteration} ended with status {status:?}")]
    LpFailed { iteration: usize, status: LpStatus },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("invalid data at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = CalibError> = std::result::Result<T, E>;
