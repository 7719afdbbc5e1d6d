//! Per-camera orientation refinement by Levenberg–Marquardt.
//!
//! Markers and the camera translation are held fixed, so each camera's
//! three angles form an independent nonlinear least-squares problem over
//! the residual pairs of the markers it sees.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::geometry::{CameraPose, EulerAngles};
use crate::observations::NormalizedObservations;
use crate::residuals::residual_uv;

/// Markers a camera must see for its orientation to be determined.
pub const MIN_OBSERVATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub max_iterations: usize,
    /// Stop when the largest gradient component falls below this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step is shorter than this relative to the angles.
    pub step_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            max_iterations: 50,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_damping > 0.0
            && self.damping_increase > 1.0
            && self.damping_decrease > 1.0
            && self.gradient_tolerance > 0.0
            && self.step_tolerance > 0.0
            && self.max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(CalibError::InvalidArgument(format!("invalid LM settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmTermination {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    /// Damping grew without finding a decrease.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSolveReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub termination: LmTermination,
}

/// Residual vector and its angle Jacobian for one camera.
struct Linearization {
    cost: f64,
    /// `J' r`.
    gradient: Vector3<f64>,
    /// `J' J`.
    normal: Matrix3<f64>,
}

fn camera_terms(
    camera: usize,
    obs: &NormalizedObservations,
) -> impl Iterator<Item = (usize, Vector2<f64>)> + '_ {
    obs.by_camera[camera].iter().map(|&i| {
        let e = &obs.entries[i];
        (e.marker, Vector2::new(e.u, e.v))
    })
}

/// Cost of camera `camera` at `angles`.
pub fn camera_cost(
    camera: usize,
    angles: &EulerAngles,
    translation: &Vector3<f64>,
    markers: &[Vector3<f64>],
    obs: &NormalizedObservations,
) -> f64 {
    let r = angles.matrix();
    camera_terms(camera, obs)
        .map(|(m, q)| {
            let res = residual_uv(&markers[m], &r, translation, &q);
            res.u * res.u + res.v * res.v
        })
        .sum()
}

/// Jacobian of the stacked residuals `[U_1, V_1, U_2, V_2, ...]` of camera
/// `camera` with respect to its angles; one row per residual, in marker
/// order.
pub fn angle_jacobian(
    camera: usize,
    pose: &CameraPose,
    markers: &[Vector3<f64>],
    obs: &NormalizedObservations,
) -> Vec<[f64; 3]> {
    let d = pose.angles.matrix_derivatives();
    let mut rows = Vec::with_capacity(2 * obs.by_camera[camera].len());
    for (m, q) in camera_terms(camera, obs) {
        let x = &markers[m];
        let dp = [d[0] * x, d[1] * x, d[2] * x];
        rows.push([0, 1, 2].map(|i| q.x * dp[i].z - dp[i].x));
        rows.push([0, 1, 2].map(|i| q.y * dp[i].z - dp[i].y));
    }
    rows
}

fn linearize(
    camera: usize,
    pose: &CameraPose,
    markers: &[Vector3<f64>],
    obs: &NormalizedObservations,
) -> Linearization {
    let r = pose.rotation();
    let d = pose.angles.matrix_derivatives();
    let mut cost = 0.0;
    let mut gradient = Vector3::zeros();
    let mut normal = Matrix3::zeros();
    for (m, q) in camera_terms(camera, obs) {
        let x = &markers[m];
        let res = residual_uv(x, &r, &pose.translation, &q);
        let dp = [d[0] * x, d[1] * x, d[2] * x];
        let ju = Vector3::from_fn(|i, _| q.x * dp[i].z - dp[i].x);
        let jv = Vector3::from_fn(|i, _| q.y * dp[i].z - dp[i].y);
        cost += res.u * res.u + res.v * res.v;
        gradient += ju * res.u + jv * res.v;
        normal += ju * ju.transpose() + jv * jv.transpose();
    }
    Linearization { cost, gradient, normal }
}

/// Solves `(H + lambda I) s = -g`, raising `lambda` until the damped matrix
/// is positive definite.
fn damped_step(h: &Matrix3<f64>, g: &Vector3<f64>, lambda: f64) -> Option<Vector3<f64>> {
    let mut extra = 0.0;
    for _ in 0..20 {
        let a = h + Matrix3::identity() * (lambda + extra);
        if let Some(ch) = a.cholesky() {
            return Some(ch.solve(&(-g)));
        }
        extra = if extra == 0.0 { lambda.max(1e-12) } else { extra * 10.0 };
    }
    None
}

/// Refines the angles of `camera` with markers and translation fixed.
pub fn solve_angles(
    camera: usize,
    pose: &CameraPose,
    markers: &[Vector3<f64>],
    obs: &NormalizedObservations,
    cfg: &LmConfig,
) -> Result<(EulerAngles, AngleSolveReport)> {
    let count = obs.by_camera[camera].len();
    if count < MIN_OBSERVATIONS {
        return Err(CalibError::InsufficientObservations { camera, count, required: MIN_OBSERVATIONS });
    }
    let mut current = *pose;
    let mut lin = linearize(camera, &current, markers, obs);
    if !lin.cost.is_finite() {
        return Err(CalibError::Numeric(format!("non-finite residuals for camera {camera}")));
    }
    let initial_cost = lin.cost;
    let mut lambda = cfg.initial_damping;
    let mut iterations = 0;
    let termination = loop {
        if lin.gradient.amax() < cfg.gradient_tolerance {
            break LmTermination::GradientTolerance;
        }
        if iterations >= cfg.max_iterations {
            break LmTermination::MaxIterations;
        }
        iterations += 1;
        let Some(step) = damped_step(&lin.normal, &lin.gradient, lambda) else {
            break LmTermination::Stalled;
        };
        let angles = EulerAngles::from_array(
            [0, 1, 2].map(|i| current.angles.as_array()[i] + step[i]),
        );
        let trial_cost = camera_cost(camera, &angles, &current.translation, markers, obs);
        if trial_cost.is_finite() && trial_cost < lin.cost {
            current.angles = angles;
            lin = linearize(camera, &current, markers, obs);
            lambda = (lambda / cfg.damping_decrease).max(1e-15);
            let scale = Vector3::from(current.angles.as_array()).norm() + cfg.step_tolerance;
            if step.norm() <= cfg.step_tolerance * scale {
                break LmTermination::StepTolerance;
            }
        } else {
            lambda *= cfg.damping_increase;
            if lambda > 1e16 {
                break LmTermination::Stalled;
            }
        }
    };
    Ok((
        current.angles,
        AngleSolveReport { iterations, initial_cost, final_cost: lin.cost, termination },
    ))
}
