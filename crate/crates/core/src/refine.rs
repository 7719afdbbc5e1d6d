//! Alternating refinement of orientations, translations and markers.
//!
//! One outer iteration:
//!
//! 1. every camera's angles are refined by Levenberg–Marquardt with the
//!    markers and its translation fixed (cameras in parallel);
//! 2. markers and translations are re-estimated by the least-absolute-error
//!    linear program at the new angles;
//! 3. the result is brought back to a fixed gauge: the marker centroid is
//!    held and the mean wand length is set to the physical length;
//! 4. the squared objective is minimized along the line from the previous
//!    iterate through the new one.
//!
//! The iterate only moves when the squared objective decreases. A step that
//! cannot decrease it is rolled back and ends the run.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wandcal_lp::{mps::write_mps, solve_lp, Basis, LpConfig, LpStatus};

use crate::angles::{solve_angles, LmConfig};
use crate::error::{CalibError, Result};
use crate::geometry::{CameraIntrinsics, EulerAngles};
use crate::observations::{CalibrationState, NormalizedObservations, ObservationSet};
use crate::residuals::{
    eval_e, eval_lae, eval_p, recover_scale, reprojection_rms, wand_length_stats, ScaleEstimator,
};
use crate::subproblem::{add_anti_collapse, build_lp, extract_solution, FixedAngleContext, SubproblemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearchConfig {
    pub enabled: bool,
    /// Largest multiple of the step that is tried.
    pub max_step: f64,
    /// Golden-section iterations after the coarse scan.
    pub refinements: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self { enabled: true, max_step: 100.0, refinements: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub max_iterations: usize,
    /// Stop when one iteration lowers the squared objective by less than
    /// this fraction.
    pub tolerance: f64,
    /// Stop once the squared objective is at or below this value.
    pub objective_floor: f64,
    pub lm: LmConfig,
    pub lp: LpConfig,
    pub subproblem: SubproblemConfig,
    pub line_search: LineSearchConfig,
    pub scale_estimator: ScaleEstimator,
    /// Reuse the previous optimal basis as the starting basis.
    pub warm_start: bool,
    /// Write every subproblem as `<prefix>_<iteration>.mps`.
    pub lp_dump: Option<PathBuf>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-8,
            objective_floor: 1e-16,
            lm: LmConfig::default(),
            lp: LpConfig { primal_tolerance: 1e-10, dual_tolerance: 1e-10, ..LpConfig::default() },
            subproblem: SubproblemConfig::default(),
            line_search: LineSearchConfig::default(),
            scale_estimator: ScaleEstimator::Mean,
            warm_start: true,
            lp_dump: None,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        self.lm.validate()?;
        let bad = |m: String| Err(CalibError::InvalidArgument(m));
        if self.max_iterations == 0 {
            return bad("at least one iteration is required".into());
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return bad(format!("tolerance {} must be positive", self.tolerance));
        }
        if !(self.objective_floor >= 0.0) {
            return bad("objective floor must be non-negative".into());
        }
        if !(self.line_search.max_step >= 1.0) {
            return bad("line search max_step must be at least 1".into());
        }
        if !(self.lp.primal_tolerance > 0.0 && self.lp.dual_tolerance > 0.0) {
            return bad("LP tolerances must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative decrease fell below the tolerance.
    Converged,
    /// Squared objective reached the floor.
    ObjectiveFloor,
    MaxIterations,
    /// The subproblem step could not lower the squared objective; the last
    /// iterate was kept.
    LaeLseDivergence,
}

impl Termination {
    pub fn describe(&self) -> &'static str {
        match self {
            Termination::Converged => "relative decrease below tolerance",
            Termination::ObjectiveFloor => "objective below floor",
            Termination::MaxIterations => "iteration limit reached",
            Termination::LaeLseDivergence => "LAE/LSE divergence",
        }
    }
}

/// Per-iteration record. Objectives are at the fixed gauge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Squared objective after the iteration (before it, if rolled back).
    pub e: f64,
    /// Absolute objective at the new angles, before the linear program.
    pub lae_before_lp: f64,
    /// Optimal value of the linear program.
    pub lae_after_lp: f64,
    /// Squared pixel error, when every observed marker is in front.
    pub pixel_error: Option<f64>,
    /// Pixel reprojection RMS, when every observed marker is in front.
    pub reprojection_rms: Option<f64>,
    pub length_std: f64,
    /// Multiple of the subproblem step that was taken.
    pub step: f64,
    pub lp_iterations: usize,
    pub accepted: bool,
    /// Wall-clock timings are left out of serialized reports so that
    /// reruns produce identical files.
    #[serde(skip_serializing, default)]
    pub ms_angles: f64,
    #[serde(skip_serializing, default)]
    pub ms_lp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub initial_e: f64,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    /// Factor applied by the final scale recovery.
    pub scale_factor: f64,
    pub final_e: f64,
    pub final_reprojection_rms: Option<f64>,
}

impl RefineReport {
    /// Per-iteration table as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,E,LAE_before,LAE_after,P,rms_px,length_std,step,lp_iterations,accepted,ms_angles,ms_lp\n",
        );
        for r in &self.iterations {
            let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{},{},{:e},{},{},{},{:.3},{:.3}\n",
                r.iteration,
                r.e,
                r.lae_before_lp,
                r.lae_after_lp,
                opt(r.pixel_error),
                opt(r.reprojection_rms),
                r.length_std,
                r.step,
                r.lp_iterations,
                r.accepted,
                r.ms_angles,
                r.ms_lp
            ));
        }
        out
    }
}

/// Shifts the markers so their centroid is `centroid` and scales the scene
/// about it so the mean wand length is `wand_length`.
pub fn normalize_gauge(
    state: &CalibrationState,
    centroid: &Vector3<f64>,
    wand_length: f64,
) -> Result<CalibrationState> {
    let mean = wand_length_stats(&state.markers)?.mean;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(CalibError::DegenerateGeometry(format!("estimated wand length {mean} is degenerate")));
    }
    let s = wand_length / mean;
    let current = state.markers.iter().sum::<Vector3<f64>>() / state.markers.len() as f64;
    let mut out = state.clone();
    for x in &mut out.markers {
        *x = centroid + (*x - current) * s;
    }
    // A point p maps to c + s (p - c0); with camera rotation R the new
    // translation is s t + R (s c0 - c).
    for p in &mut out.poses {
        let r = p.rotation();
        p.translation = s * p.translation + r * (s * current - centroid);
    }
    Ok(out)
}

/// Flat parameter vector: angles, translations, markers.
fn pack(state: &CalibrationState) -> Vec<f64> {
    let mut z = Vec::with_capacity(6 * state.poses.len() + 3 * state.markers.len());
    for p in &state.poses {
        z.extend_from_slice(&p.angles.as_array());
    }
    for p in &state.poses {
        z.extend_from_slice(p.translation.as_slice());
    }
    for x in &state.markers {
        z.extend_from_slice(x.as_slice());
    }
    z
}

fn unpack(z: &[f64], template: &CalibrationState) -> CalibrationState {
    let n = template.poses.len();
    let mut out = template.clone();
    for (i, p) in out.poses.iter_mut().enumerate() {
        p.angles = EulerAngles::from_array([z[3 * i], z[3 * i + 1], z[3 * i + 2]]);
        let t = 3 * n + 3 * i;
        p.translation = Vector3::new(z[t], z[t + 1], z[t + 2]);
    }
    for (m, x) in out.markers.iter_mut().enumerate() {
        let k = 6 * n + 3 * m;
        *x = Vector3::new(z[k], z[k + 1], z[k + 2]);
    }
    out
}

/// Largest `a <= cap` keeping `from + a * dir` inside the box on every
/// translation and marker coordinate.
fn box_limit(from: &[f64], dir: &[f64], angles: usize, bound: f64, cap: f64) -> f64 {
    let mut a = cap;
    for (z, d) in from.iter().zip(dir).skip(angles) {
        if *d > 0.0 {
            a = a.min((bound - z) / d);
        } else if *d < 0.0 {
            a = a.min((-bound - z) / d);
        }
    }
    a.max(0.0)
}

/// Minimizes `f` over `(0, hi]` by a geometric scan followed by golden
/// section inside the best bracket. Returns the best `(a, f(a))` seen,
/// which always includes `a = 1` when `hi >= 1`.
fn line_minimize(f: impl Fn(f64) -> f64, hi: f64, refinements: usize) -> (f64, f64) {
    let mut grid: Vec<f64> = [0.125, 0.25, 0.5, 1.0].into_iter().filter(|&a| a <= hi).collect();
    let mut a = 2.0;
    while a < hi {
        grid.push(a);
        a *= 2.0;
    }
    if grid.last().is_none_or(|&l| l < hi) {
        grid.push(hi);
    }
    let vals: Vec<f64> = grid.iter().map(|&a| f(a)).collect();
    let (k, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
    let mut best = (grid[k], vals[k]);
    let mut lo = if k == 0 { 0.0 } else { grid[k - 1] };
    let mut up = if k + 1 < grid.len() { grid[k + 1] } else { grid[k] };
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = up - INV_PHI * (up - lo);
    let mut x2 = lo + INV_PHI * (up - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..refinements {
        for (x, fx) in [(x1, f1), (x2, f2)] {
            if fx < best.1 && x > 0.0 {
                best = (x, fx);
            }
        }
        if f1 < f2 {
            up = x2;
            x2 = x1;
            f2 = f1;
            x1 = up - INV_PHI * (up - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (up - lo);
            f2 = f(x2);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx < best.1 && x > 0.0 {
            best = (x, fx);
        }
    }
    best
}

fn pixel_error(state: &CalibrationState, intrinsics: &[CameraIntrinsics], obs: &ObservationSet) -> Option<f64> {
    eval_p(state, intrinsics, obs).ok()
}

/// Per-camera angle solves, in parallel.
fn angle_stage(
    state: &CalibrationState,
    nobs: &NormalizedObservations,
    lm: &LmConfig,
) -> Result<CalibrationState> {
    let angles: Vec<EulerAngles> = (0..state.poses.len())
        .into_par_iter()
        .map(|n| solve_angles(n, &state.poses[n], &state.markers, nobs, lm).map(|(a, _)| a.normalized()))
        .collect::<Result<_>>()?;
    let mut out = state.clone();
    for (p, a) in out.poses.iter_mut().zip(angles) {
        p.angles = a;
    }
    Ok(out)
}

struct LpStage {
    state: CalibrationState,
    lae_before: f64,
    lae_after: f64,
    iterations: usize,
    basis: Option<Basis>,
}

fn lp_stage(
    iteration: usize,
    state: &CalibrationState,
    nobs: &NormalizedObservations,
    cfg: &RefineConfig,
    hint: Option<&Basis>,
) -> Result<LpStage> {
    let ctx = FixedAngleContext::from_poses(&state.poses);
    let (mut p, mut layout) = build_lp(nobs, &ctx, &cfg.subproblem)?;
    add_anti_collapse(&mut p, &mut layout, &ctx, state, cfg.subproblem.anti_collapse)?;
    if let Some(prefix) = &cfg.lp_dump {
        let path = PathBuf::from(format!("{}_{iteration:03}.mps", prefix.display()));
        std::fs::write(&path, write_mps(&p, &format!("WANDLP{iteration}")))
            .map_err(|e| CalibError::InvalidArgument(format!("cannot write {}: {e}", path.display())))?;
    }
    let hint = if cfg.warm_start { hint } else { None };
    let sol = solve_lp(&p, &cfg.lp, hint)?;
    if sol.status != LpStatus::Optimal {
        return Err(CalibError::LpFailed { iteration, status: sol.status });
    }
    let (markers, translations) = extract_solution(&sol, &layout)?;
    let mut out = state.clone();
    out.markers = markers;
    for (pose, t) in out.poses.iter_mut().zip(translations) {
        pose.translation = t;
    }
    Ok(LpStage {
        lae_before: eval_lae(state, nobs),
        lae_after: sol.objective,
        iterations: sol.iterations,
        basis: sol.basis,
        state: out,
    })
}

/// Refines `init` against `obs`. The returned state is scaled so that the
/// wand length statistic matches the physical length.
pub fn refine(
    init: &CalibrationState,
    obs: &ObservationSet,
    intrinsics: &[CameraIntrinsics],
    cfg: &RefineConfig,
) -> Result<(CalibrationState, RefineReport)> {
    cfg.validate()?;
    init.check_shape(obs)?;
    let bound = cfg.subproblem.bound;
    if init.max_abs_coordinate() > bound {
        return Err(CalibError::InvalidArgument(format!(
            "initial state leaves the box of half-width {bound}"
        )));
    }
    let nobs = obs.normalized(intrinsics)?;
    let d = obs.wand_length();
    let centroid = init.markers.iter().sum::<Vector3<f64>>() / init.markers.len() as f64;
    let angle_count = 3 * init.poses.len();
    let k = obs.observations().len();

    let mut current = normalize_gauge(init, &centroid, d)?;
    if current.max_abs_coordinate() > bound {
        current = init.clone();
    }
    let mut e_current = eval_e(&current, &nobs);
    let initial_e = e_current;
    let mut records = Vec::new();
    let mut basis: Option<Basis> = None;
    let mut termination = Termination::MaxIterations;

    for iteration in 1..=cfg.max_iterations {
        let t0 = Instant::now();
        let after_angles = angle_stage(&current, &nobs, &cfg.lm)?;
        let ms_angles = t0.elapsed().as_secs_f64() * 1e3;

        let t1 = Instant::now();
        let lp = lp_stage(iteration, &after_angles, &nobs, cfg, basis.as_ref())?;
        let ms_lp = t1.elapsed().as_secs_f64() * 1e3;
        basis = lp.basis.clone();

        let target = normalize_gauge(&lp.state, &centroid, d)?;
        let z0 = pack(&current);
        let z1 = pack(&target);
        let dir: Vec<f64> = z1.iter().zip(&z0).map(|(a, b)| a - b).collect();
        let at = |a: f64| -> CalibrationState {
            let z: Vec<f64> = z0.iter().zip(&dir).map(|(z, d)| z + a * d).collect();
            unpack(&z, &current)
        };
        let e_of = |a: f64| {
            let e = eval_e(&at(a), &nobs);
            if e.is_finite() { e } else { f64::INFINITY }
        };
        let (step, e_new) = if cfg.line_search.enabled {
            let cap = box_limit(&z0, &dir, angle_count, bound, cfg.line_search.max_step);
            line_minimize(e_of, cap.max(f64::MIN_POSITIVE), cfg.line_search.refinements)
        } else {
            (1.0, e_of(1.0))
        };
        let candidate = at(step);
        let in_box = candidate.max_abs_coordinate() <= bound * (1.0 + 1e-12);

        let accepted = e_new < e_current && in_box;
        let e_before = e_current;
        if accepted {
            current = candidate;
            for p in &mut current.poses {
                p.angles = p.angles.normalized();
            }
            e_current = eval_e(&current, &nobs);
        }
        let p = pixel_error(&current, intrinsics, obs);
        records.push(IterationRecord {
            iteration,
            e: e_current,
            lae_before_lp: lp.lae_before,
            lae_after_lp: lp.lae_after,
            pixel_error: p,
            reprojection_rms: p.map(|p| reprojection_rms(p, k)),
            length_std: wand_length_stats(&current.markers)?.std,
            step: if accepted { step } else { 0.0 },
            lp_iterations: lp.iterations,
            accepted,
            ms_angles,
            ms_lp,
        });
        if e_current <= cfg.objective_floor {
            termination = Termination::ObjectiveFloor;
            break;
        }
        if !accepted {
            termination = Termination::LaeLseDivergence;
            break;
        }
        if (e_before - e_current) < cfg.tolerance * e_before {
            termination = Termination::Converged;
            break;
        }
    }

    let (scaled, scale_factor) = recover_scale(&current, d, cfg.scale_estimator)?;
    let final_e = eval_e(&scaled, &nobs);
    let report = RefineReport {
        initial_e,
        final_reprojection_rms: pixel_error(&scaled, intrinsics, obs).map(|p| reprojection_rms(p, k)),
        iterations: records,
        termination,
        scale_factor,
        final_e,
    };
    Ok((scaled, report))
}
