//! Objective functions, wand-length statistics and scale recovery.
//!
//! The algebraic residuals of one observation are
//!
//! ```text
//! U = u p_z - p_x,   V = v p_z - p_y,   p = R x + t
//! ```
//!
//! where `(u, v)` are normalized image coordinates. They are linear in the
//! marker `x` and the translation `t`. Sums over observations use Neumaier
//! compensation in a fixed order so totals are reproducible.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::geometry::{project_with, CameraIntrinsics};
use crate::observations::{CalibrationState, NormalizedObservations, ObservationSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPair {
    pub u: f64,
    pub v: f64,
}

/// Residual pair of marker `x` seen at normalized coordinates `q` by a
/// camera with rotation `r` and translation `t`.
pub fn residual_uv(x: &Vector3<f64>, r: &Matrix3<f64>, t: &Vector3<f64>, q: &Vector2<f64>) -> ResidualPair {
    let p = r * x + t;
    ResidualPair { u: q.x * p.z - p.x, v: q.y * p.z - p.y }
}

/// Compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

/// Residuals of every observation, in observation order.
pub fn residuals(state: &CalibrationState, obs: &NormalizedObservations) -> Vec<ResidualPair> {
    let rot = state.rotations();
    obs.entries
        .iter()
        .map(|e| {
            residual_uv(
                &state.markers[e.marker],
                &rot[e.camera],
                &state.poses[e.camera].translation,
                &Vector2::new(e.u, e.v),
            )
        })
        .collect()
}

/// Sum of squared residuals.
pub fn eval_e(state: &CalibrationState, obs: &NormalizedObservations) -> f64 {
    residuals(state, obs)
        .iter()
        .map(|r| r.u * r.u + r.v * r.v)
        .collect::<NeumaierSum>()
        .value()
}

/// Sum of absolute residuals.
pub fn eval_lae(state: &CalibrationState, obs: &NormalizedObservations) -> f64 {
    residuals(state, obs)
        .iter()
        .map(|r| r.u.abs() + r.v.abs())
        .collect::<NeumaierSum>()
        .value()
}

/// Sum of squared pixel reprojection errors.
pub fn eval_p(
    state: &CalibrationState,
    intrinsics: &[CameraIntrinsics],
    obs: &ObservationSet,
) -> Result<f64> {
    let rot = state.rotations();
    let mut total = NeumaierSum::default();
    for o in obs.observations() {
        let pose = &state.poses[o.camera];
        let uv = project_with(&state.markers[o.marker], &rot[o.camera], &pose.translation, &intrinsics[o.camera])
            .map_err(|b| CalibError::BehindCamera { marker: o.marker, camera: o.camera, depth: b.depth })?;
        let (du, dv) = (uv.x - o.u, uv.y - o.v);
        total.add(du * du + dv * dv);
    }
    Ok(total.value())
}

/// Root-mean-square error per image coordinate for a squared pixel total
/// over `num_observations` observations.
pub fn reprojection_rms(p: f64, num_observations: usize) -> f64 {
    if num_observations == 0 {
        0.0
    } else {
        (p / (2 * num_observations) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WandLengthStats {
    pub mean: f64,
    /// Population standard deviation of `lengths`.
    pub std: f64,
    pub lengths: Vec<f64>,
}

pub fn wand_length_stats(markers: &[Vector3<f64>]) -> Result<WandLengthStats> {
    if markers.is_empty() || markers.len() % 2 != 0 {
        return Err(CalibError::InvalidArgument(format!(
            "wand statistics need a positive even marker count, got {}",
            markers.len()
        )));
    }
    let lengths: Vec<f64> = markers.chunks_exact(2).map(|p| (p[1] - p[0]).norm()).collect();
    let n = lengths.len() as f64;
    let mean = lengths.iter().copied().collect::<NeumaierSum>().value() / n;
    let var = lengths.iter().map(|l| (l - mean).powi(2)).collect::<NeumaierSum>().value() / n;
    Ok(WandLengthStats { mean, std: var.sqrt(), lengths })
}

/// Statistic of the per-frame wand lengths matched to the physical length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleEstimator {
    #[default]
    Mean,
    Median,
}

/// Scales markers and translations by `d / d_m`, where `d_m` is the estimated
/// wand length. Returns the scaled state and the factor.
pub fn recover_scale(
    state: &CalibrationState,
    wand_length: f64,
    estimator: ScaleEstimator,
) -> Result<(CalibrationState, f64)> {
    let stats = wand_length_stats(&state.markers)?;
    let estimate = match estimator {
        ScaleEstimator::Mean => stats.mean,
        ScaleEstimator::Median => {
            let mut l = stats.lengths.clone();
            l.sort_by(f64::total_cmp);
            let k = l.len();
            if k % 2 == 1 {
                l[k / 2]
            } else {
                0.5 * (l[k / 2 - 1] + l[k / 2])
            }
        }
    };
    if !(estimate > 0.0 && estimate.is_finite()) {
        return Err(CalibError::DegenerateGeometry(format!(
            "estimated wand length {estimate} cannot be rescaled"
        )));
    }
    let s = wand_length / estimate;
    Ok((scale_state(state, s), s))
}

/// Multiplies every translation and marker by `s`.
pub fn scale_state(state: &CalibrationState, s: f64) -> CalibrationState {
    let mut out = state.clone();
    for p in &mut out.poses {
        p.translation *= s;
    }
    for x in &mut out.markers {
        *x *= s;
    }
    out
}
