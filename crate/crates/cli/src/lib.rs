//! Library side of the `wandcal` command: file formats and the commands
//! themselves, callable without spawning a process.

pub mod commands;
pub mod io;

use std::path::Path;

use thiserror::Error;
use wandcal_core::CalibError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    BadInput(String),
    #[error("{file}: invalid value at `{path}`: {message}")]
    Schema { file: String, path: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Calib(#[from] CalibError),
}

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const BAD_INPUT: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    pub const INVARIANT: u8 = 4;
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::BadInput(_) | CliError::Schema { .. } | CliError::Io { .. } => exit::BAD_INPUT,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Calib(e) => match e {
                CalibError::InvalidArgument(_)
                | CalibError::InsufficientObservations { .. }
                | CalibError::Schema { .. } => exit::BAD_INPUT,
                CalibError::Lp(wandcal_lp::LpError::Mps { .. }) => exit::BAD_INPUT,
                CalibError::Invariant(_) | CalibError::Lp(wandcal_lp::LpError::InvalidProblem(_)) => {
                    exit::INVARIANT
                }
                CalibError::BehindCamera { .. }
                | CalibError::DegenerateGeometry(_)
                | CalibError::Numeric(_)
                | CalibError::LpFailed { .. } => exit::NUMERICAL,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use wandcal_lp::{LpError, LpStatus};

    #[test]
    fn errors_map_to_their_exit_class() {
        let cases = [
            (CliError::BadInput("x".into()), exit::BAD_INPUT),
            (CliError::Numerical("x".into()), exit::NUMERICAL),
            (CalibError::InvalidArgument("x".into()).into(), exit::BAD_INPUT),
            (CalibError::InsufficientObservations { camera: 0, count: 1, required: 2 }.into(), exit::BAD_INPUT),
            (CalibError::Lp(LpError::Mps { line: 3, message: "x".into() }).into(), exit::BAD_INPUT),
            (CalibError::Invariant("x".into()).into(), exit::INVARIANT),
            (CalibError::Lp(LpError::InvalidProblem("x".into())).into(), exit::INVARIANT),
            (CalibError::BehindCamera { marker: 0, camera: 1, depth: -1.0 }.into(), exit::NUMERICAL),
            (CalibError::LpFailed { iteration: 2, status: LpStatus::Infeasible }.into(), exit::NUMERICAL),
        ];
        for (err, code) in cases {
            assert_eq!(err.exit_code(), code, "{err}");
        }
    }
}
