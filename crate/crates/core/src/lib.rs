//! Wand-based extrinsic calibration of a multi-camera rig.

pub mod alignment;
pub mod angles;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod observations;
pub mod refine;
pub mod residuals;
pub mod simulator;
pub mod subproblem;

pub use error::{CalibError, Result};
