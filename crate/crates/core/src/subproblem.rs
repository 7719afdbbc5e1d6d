//! Least-absolute-error subproblem over markers and translations at fixed
//! orientations, encoded as a linear program.
//!
//! Variable layout: `3M` marker coordinates, then `3N` translation
//! components, then one `(a_u, a_v)` pair per visible observation. Each
//! observation contributes the four rows `±U - a_u <= 0`, `±V - a_v <= 0`,
//! and the objective is the sum of all `a`. At an optimum `a_u = |U|` and
//! `a_v = |V|`, so the LP value equals the absolute-error objective.
//!
//! Without further rows the LP is minimized by collapsing every marker and
//! camera center onto one point. The anti-collapse rows keep the first
//! markers of the sequence, which the capture protocol places below every
//! camera, strictly under the centers of the cameras that see them.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use wandcal_lp::{LpProblem, LpSolution, LpStatus};

use crate::error::{CalibError, Result};
use crate::geometry::{camera_center, CameraPose};
use crate::observations::{CalibrationState, NormalizedObservations};
use crate::residuals::residual_uv;

/// Form of the rows that keep the low-start markers below the cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AntiCollapse {
    Disabled,
    /// `z_m <= c_z` with the camera height taken from the incoming poses.
    FrozenCenters,
    /// `z_m - c_z(t) <= -margin`, where the camera height `c_z(t)` is linear
    /// in the unknown translation. The margin is `margin_ratio` times the
    /// smallest gap in the incoming state.
    MovingCenters { margin_ratio: f64 },
}

impl Default for AntiCollapse {
    fn default() -> Self {
        AntiCollapse::MovingCenters { margin_ratio: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubproblemConfig {
    /// Box half-width for every marker coordinate and translation component.
    pub bound: f64,
    /// Number of leading markers constrained to lie below their cameras.
    pub m_cal: usize,
    pub anti_collapse: AntiCollapse,
}

impl Default for SubproblemConfig {
    fn default() -> Self {
        Self { bound: 10.0, m_cal: 200, anti_collapse: AntiCollapse::default() }
    }
}

/// Rotation matrices held fixed during one LP solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedAngleContext {
    pub rotations: Vec<Matrix3<f64>>,
}

impl FixedAngleContext {
    pub fn from_poses(poses: &[CameraPose]) -> Self {
        Self { rotations: poses.iter().map(CameraPose::rotation).collect() }
    }
}

/// Column and row bookkeeping for an assembled subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemLayout {
    pub num_markers: usize,
    pub num_cameras: usize,
    /// `(marker, camera)` of each visible observation, in column order.
    pub pairs: Vec<(usize, usize)>,
    pub bound: f64,
    /// Constrained marker count after clamping to the marker count.
    pub m_cal: usize,
    /// Number of absolute-value rows (four per observation).
    pub abs_rows: usize,
    /// `(marker, camera)` of each anti-collapse row, in row order.
    pub anti_collapse_rows: Vec<(usize, usize)>,
    /// Margin used by moving-center rows; zero otherwise.
    pub anti_collapse_margin: f64,
}

impl SubproblemLayout {
    pub fn marker_col(&self, m: usize) -> usize {
        3 * m
    }

    pub fn translation_col(&self, n: usize) -> usize {
        3 * self.num_markers + 3 * n
    }

    /// Column of `a_u` for observation `k`; `a_v` follows it.
    pub fn aux_col(&self, k: usize) -> usize {
        3 * self.num_markers + 3 * self.num_cameras + 2 * k
    }

    pub fn num_structural(&self) -> usize {
        3 * self.num_markers + 3 * self.num_cameras
    }

    pub fn num_vars(&self) -> usize {
        self.num_structural() + 2 * self.pairs.len()
    }
}

/// Coefficients of `U` and `V` over `(x, t)` for one observation:
/// `U = cu_x . x + cu_t . t`, likewise for `V`.
fn residual_forms(r: &Matrix3<f64>, u: f64, v: f64) -> ([f64; 3], [f64; 3], [f64; 3], [f64; 3]) {
    let r1 = r.row(0);
    let r2 = r.row(1);
    let r3 = r.row(2);
    let cu_x = [0, 1, 2].map(|j| u * r3[j] - r1[j]);
    let cv_x = [0, 1, 2].map(|j| v * r3[j] - r2[j]);
    let cu_t = [-1.0, 0.0, u];
    let cv_t = [0.0, -1.0, v];
    (cu_x, cu_t, cv_x, cv_t)
}

/// Assembles the absolute-value rows, bounds and objective.
pub fn build_lp(
    obs: &NormalizedObservations,
    ctx: &FixedAngleContext,
    cfg: &SubproblemConfig,
) -> Result<(LpProblem, SubproblemLayout)> {
    if !(cfg.bound.is_finite() && cfg.bound > 0.0) {
        return Err(CalibError::InvalidArgument(format!("bound {} must be positive", cfg.bound)));
    }
    if ctx.rotations.len() != obs.num_cameras {
        return Err(CalibError::InvalidArgument("one rotation per camera is required".into()));
    }
    if let Some(n) = obs.by_camera.iter().position(Vec::is_empty) {
        return Err(CalibError::DegenerateGeometry(format!("camera {n} observes no markers")));
    }
    let layout = SubproblemLayout {
        num_markers: obs.num_markers,
        num_cameras: obs.num_cameras,
        pairs: obs.entries.iter().map(|e| (e.marker, e.camera)).collect(),
        bound: cfg.bound,
        m_cal: cfg.m_cal.min(obs.num_markers),
        abs_rows: 4 * obs.entries.len(),
        anti_collapse_rows: Vec::new(),
        anti_collapse_margin: 0.0,
    };
    let mut p = LpProblem::new(layout.num_vars());
    for j in 0..layout.num_structural() {
        p.set_bounds(j, -cfg.bound, cfg.bound);
    }
    let mut row = Vec::with_capacity(7);
    for (k, e) in obs.entries.iter().enumerate() {
        let (cu_x, cu_t, cv_x, cv_t) = residual_forms(&ctx.rotations[e.camera], e.u, e.v);
        let xc = layout.marker_col(e.marker);
        let tc = layout.translation_col(e.camera);
        let aux = layout.aux_col(k);
        for (cx, ct, a) in [(cu_x, cu_t, aux), (cv_x, cv_t, aux + 1)] {
            // |U| <= B (sum of |coefficients|) anywhere in the box; twice that
            // keeps the cap slack at every feasible point.
            let cap = 2.0 * cfg.bound * cx.iter().chain(&ct).map(|c| c.abs()).sum::<f64>();
            p.set_objective(a, 1.0);
            p.set_bounds(a, 0.0, cap.max(1.0));
            for sign in [1.0, -1.0] {
                row.clear();
                row.extend((0..3).map(|j| (xc + j, sign * cx[j])));
                row.extend((0..3).map(|j| (tc + j, sign * ct[j])));
                row.push((a, -1.0));
                p.add_row(&row, 0.0);
            }
        }
    }
    Ok((p, layout))
}

/// Appends anti-collapse rows for every visible pair among the first
/// `layout.m_cal` markers. Returns the number of rows added.
pub fn add_anti_collapse(
    p: &mut LpProblem,
    layout: &mut SubproblemLayout,
    ctx: &FixedAngleContext,
    state: &CalibrationState,
    mode: AntiCollapse,
) -> Result<usize> {
    let pairs: Vec<(usize, usize)> = layout.pairs.iter().copied().filter(|&(m, _)| m < layout.m_cal).collect();
    if pairs.is_empty() || mode == AntiCollapse::Disabled {
        return Ok(0);
    }
    let centers: Vec<Vector3<f64>> = state.poses.iter().map(camera_center).collect();
    match mode {
        AntiCollapse::Disabled => unreachable!(),
        AntiCollapse::FrozenCenters => {
            for &(m, n) in &pairs {
                p.add_row(&[(layout.marker_col(m) + 2, 1.0)], centers[n].z);
            }
        }
        AntiCollapse::MovingCenters { margin_ratio } => {
            if !(margin_ratio > 0.0 && margin_ratio < 1.0) {
                return Err(CalibError::InvalidArgument(format!(
                    "anti-collapse margin ratio {margin_ratio} must lie in (0, 1)"
                )));
            }
            let gaps = pairs.iter().map(|&(m, n)| centers[n].z - state.markers[m].z);
            let min_gap = gaps.clone().fold(f64::INFINITY, f64::min);
            let min_positive = gaps.filter(|g| *g > 0.0).fold(f64::INFINITY, f64::min);
            let reference = if min_gap > 0.0 { min_gap } else { min_positive };
            if !reference.is_finite() {
                return Err(CalibError::DegenerateGeometry(
                    "no low-start marker lies below the cameras that see it".into(),
                ));
            }
            let margin = margin_ratio * reference;
            layout.anti_collapse_margin = margin;
            // c_z = -(R' t)_z = -sum_j R[j][2] t_j
            for &(m, n) in &pairs {
                let r = &ctx.rotations[n];
                let tc = layout.translation_col(n);
                p.add_row(
                    &[
                        (layout.marker_col(m) + 2, 1.0),
                        (tc, r[(0, 2)]),
                        (tc + 1, r[(1, 2)]),
                        (tc + 2, r[(2, 2)]),
                    ],
                    -margin,
                );
            }
        }
    }
    layout.anti_collapse_rows = pairs;
    Ok(layout.anti_collapse_rows.len())
}

/// LP point corresponding to `state`, with auxiliaries set to the absolute
/// residuals.
pub fn encode_state(
    layout: &SubproblemLayout,
    ctx: &FixedAngleContext,
    obs: &NormalizedObservations,
    state: &CalibrationState,
) -> Vec<f64> {
    let mut z = vec![0.0; layout.num_vars()];
    for (m, x) in state.markers.iter().enumerate() {
        z[layout.marker_col(m)..layout.marker_col(m) + 3].copy_from_slice(x.as_slice());
    }
    for (n, pose) in state.poses.iter().enumerate() {
        let c = layout.translation_col(n);
        z[c..c + 3].copy_from_slice(pose.translation.as_slice());
    }
    for (k, e) in obs.entries.iter().enumerate() {
        let r = residual_uv(
            &state.markers[e.marker],
            &ctx.rotations[e.camera],
            &state.poses[e.camera].translation,
            &nalgebra::Vector2::new(e.u, e.v),
        );
        z[layout.aux_col(k)] = r.u.abs();
        z[layout.aux_col(k) + 1] = r.v.abs();
    }
    z
}

/// Markers and translations from an optimal LP solution.
pub fn extract_solution(
    sol: &LpSolution,
    layout: &SubproblemLayout,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
    if sol.status != LpStatus::Optimal {
        return Err(CalibError::LpFailed { iteration: 0, status: sol.status });
    }
    let v = |c: usize| Vector3::new(sol.x[c], sol.x[c + 1], sol.x[c + 2]);
    let markers = (0..layout.num_markers).map(|m| v(layout.marker_col(m))).collect();
    let translations = (0..layout.num_cameras).map(|n| v(layout.translation_col(n))).collect();
    Ok((markers, translations))
}

/// `(a_u, a_v)` of each observation in an LP solution.
pub fn auxiliary_values(sol: &LpSolution, layout: &SubproblemLayout) -> Vec<(f64, f64)> {
    (0..layout.pairs.len())
        .map(|k| (sol.x[layout.aux_col(k)], sol.x[layout.aux_col(k) + 1]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EulerAngles;
    use crate::observations::NormalizedObservation;

    fn full_obs(m: usize, n: usize) -> NormalizedObservations {
        let mut e = Vec::new();
        for marker in 0..m {
            for camera in 0..n {
                e.push(NormalizedObservation { marker, camera, u: 0.01 * marker as f64, v: -0.02 * camera as f64 });
            }
        }
        NormalizedObservations::from_entries(m, n, e)
    }

    #[test]
    fn counts_for_two_cameras_four_markers() {
        let obs = full_obs(4, 2);
        let ctx = FixedAngleContext { rotations: vec![Matrix3::identity(); 2] };
        let (p, layout) = build_lp(&obs, &ctx, &SubproblemConfig::default()).unwrap();
        assert_eq!(p.num_vars(), 34);
        assert_eq!(p.num_rows(), 32);
        assert_eq!(layout.abs_rows, 32);
        assert_eq!(layout.m_cal, 4);
    }

    #[test]
    fn masked_pair_adds_nothing() {
        let mut obs = full_obs(4, 2);
        obs.entries.retain(|e| !(e.marker == 3 && e.camera == 1));
        let obs = NormalizedObservations::from_entries(4, 2, obs.entries);
        let ctx = FixedAngleContext { rotations: vec![Matrix3::identity(); 2] };
        let (p, _) = build_lp(&obs, &ctx, &SubproblemConfig::default()).unwrap();
        assert_eq!((p.num_vars(), p.num_rows()), (32, 28));
    }

    #[test]
    fn camera_without_observations_is_degenerate() {
        let mut obs = full_obs(2, 2);
        obs.entries.retain(|e| e.camera == 0);
        let obs = NormalizedObservations::from_entries(2, 2, obs.entries);
        let ctx = FixedAngleContext { rotations: vec![Matrix3::identity(); 2] };
        assert!(matches!(build_lp(&obs, &ctx, &SubproblemConfig::default()), Err(CalibError::DegenerateGeometry(_))));
    }

    #[test]
    fn frozen_row_transcribes_camera_height() {
        let obs = NormalizedObservations::from_entries(2, 1, vec![
            NormalizedObservation { marker: 0, camera: 0, u: 0.0, v: 0.0 },
            NormalizedObservation { marker: 1, camera: 0, u: 0.0, v: 0.0 },
        ]);
        // Camera at height 2 looking along world x.
        let r = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
        let pose = CameraPose::from_rotation_and_center(&r, &Vector3::new(0.0, 0.0, 2.0));
        let state = CalibrationState { poses: vec![pose], markers: vec![Vector3::zeros(); 2] };
        let ctx = FixedAngleContext::from_poses(&state.poses);
        let cfg = SubproblemConfig { m_cal: 1, ..SubproblemConfig::default() };
        let (mut p, mut layout) = build_lp(&obs, &ctx, &cfg).unwrap();
        let before = p.num_rows();
        assert_eq!(add_anti_collapse(&mut p, &mut layout, &ctx, &state, AntiCollapse::FrozenCenters).unwrap(), 1);
        let (cols, vals) = p.row(before);
        assert_eq!((cols, vals), (&[2usize][..], &[1.0][..]));
        assert!((p.rhs()[before] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_window_leaves_problem_unchanged() {
        let obs = full_obs(4, 2);
        let state = CalibrationState {
            poses: vec![CameraPose::new(EulerAngles::default(), Vector3::new(0.0, 0.0, 5.0)); 2],
            markers: vec![Vector3::zeros(); 4],
        };
        let ctx = FixedAngleContext::from_poses(&state.poses);
        let cfg = SubproblemConfig { m_cal: 0, ..SubproblemConfig::default() };
        let (mut p, mut layout) = build_lp(&obs, &ctx, &cfg).unwrap();
        let q = p.clone();
        assert_eq!(add_anti_collapse(&mut p, &mut layout, &ctx, &state, AntiCollapse::default()).unwrap(), 0);
        assert_eq!(p, q);
    }
}
