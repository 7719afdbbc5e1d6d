//! The fixed-angle linear program against a simulated rig.

use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;
use wandcal_core::geometry::{CameraIntrinsics, EulerAngles};
use wandcal_core::observations::{CalibrationState, NormalizedObservations};
use wandcal_core::residuals::eval_lae;
use wandcal_core::simulator::{generate_scene, perturb_state, PerturbationMagnitudes, Scene, SceneSpec};
use wandcal_core::subproblem::{
    add_anti_collapse, auxiliary_values, build_lp, encode_state, extract_solution, AntiCollapse, FixedAngleContext,
    SubproblemConfig, SubproblemLayout,
};
use wandcal_lp::{check_feasible, solve_lp, LpConfig, LpProblem, LpStatus};

/// Rz * Ry * Rx from axis rotations.
fn oracle_rotation(a: &EulerAngles) -> Matrix3<f64> {
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), a.z)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), a.y)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), a.x);
    r.into_inner()
}

/// Residual pair from raw pixels.
fn oracle_residual(x: &Vector3<f64>, a: &EulerAngles, t: &Vector3<f64>, u: f64, v: f64, k: &CameraIntrinsics) -> (f64, f64) {
    let p = oracle_rotation(a) * x + t;
    let un = (u - k.alpha) / (k.gamma * k.f);
    let vn = (v - k.beta) / k.f;
    (un * p.z - p.x, vn * p.z - p.y)
}

struct Instance {
    scene: Scene,
    nobs: NormalizedObservations,
    /// Truth markers and translations at perturbed angles.
    state: CalibrationState,
    problem: LpProblem,
    layout: SubproblemLayout,
    ctx: FixedAngleContext,
}

fn instance(seed: u64, frames: usize, noise: f64, angle: f64) -> Instance {
    let scene = generate_scene(&SceneSpec { frames, noise_sigma: noise, seed, ..SceneSpec::default() }).unwrap();
    let nobs = scene.observations.normalized(&scene.truth.intrinsics).unwrap();
    let mag = PerturbationMagnitudes { angle, translation: 0.0, marker: 0.0 };
    let state = perturb_state(&scene.truth.state, &mag, seed + 1, 10.0).unwrap();
    let ctx = FixedAngleContext::from_poses(&state.poses);
    let cfg = SubproblemConfig::default();
    let (mut problem, mut layout) = build_lp(&nobs, &ctx, &cfg).unwrap();
    add_anti_collapse(&mut problem, &mut layout, &ctx, &state, cfg.anti_collapse).unwrap();
    Instance { scene, nobs, state, problem, layout, ctx }
}

fn tight() -> LpConfig {
    LpConfig { primal_tolerance: 1e-10, dual_tolerance: 1e-10, ..LpConfig::default() }
}

#[test]
fn rows_at_a_state_reproduce_its_residuals() {
    let inst = instance(3, 15, 0.5, 0.02);
    let z = encode_state(&inst.layout, &inst.ctx, &inst.nobs, &inst.state);
    assert!(check_feasible(&inst.problem, &z) <= 1e-12);
    for (k, o) in inst.scene.observations.observations().iter().enumerate() {
        let pose = &inst.state.poses[o.camera];
        let (u, v) = oracle_residual(
            &inst.state.markers[o.marker],
            &pose.angles,
            &pose.translation,
            o.u,
            o.v,
            &inst.scene.truth.intrinsics[o.camera],
        );
        let aux = inst.layout.aux_col(k);
        // Rows 4k..4k+4 are +U, -U, +V, -V, each minus its auxiliary.
        for (row, expected, a) in [(4 * k, u, aux), (4 * k + 1, -u, aux), (4 * k + 2, v, aux + 1), (4 * k + 3, -v, aux + 1)] {
            let got = inst.problem.row_activity(row, &z) + z[a];
            assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()), "row {row}: {got} vs {expected}");
        }
    }
}

#[test]
fn optimum_matches_extracted_state_and_beats_truth() {
    for seed in [1, 2] {
        let inst = instance(seed, 20, 0.5, 0.03);
        let sol = solve_lp(&inst.problem, &tight(), None).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(check_feasible(&inst.problem, &sol.x) <= 1e-7);
        let (markers, translations) = extract_solution(&sol, &inst.layout).unwrap();
        let mut extracted = inst.state.clone();
        extracted.markers = markers;
        for (p, t) in extracted.poses.iter_mut().zip(translations) {
            p.translation = t;
        }
        let lae = eval_lae(&extracted, &inst.nobs);
        assert!((sol.objective - lae).abs() <= 1e-7, "LP {} vs LAE {lae}", sol.objective);
        assert!(sol.objective <= eval_lae(&inst.state, &inst.nobs) + 1e-9);

        // Each auxiliary equals its absolute residual at the optimum.
        let z = encode_state(&inst.layout, &inst.ctx, &inst.nobs, &extracted);
        for (k, (au, av)) in auxiliary_values(&sol, &inst.layout).into_iter().enumerate() {
            let c = inst.layout.aux_col(k);
            assert!((au - z[c]).abs() <= 1e-8 && (av - z[c + 1]).abs() <= 1e-8);
        }
    }
}

/// All markers and camera centers at `point`; every residual vanishes.
fn collapse_point(inst: &Instance, point: Vector3<f64>) -> Vec<f64> {
    let mut s = inst.state.clone();
    s.markers.iter_mut().for_each(|x| *x = point);
    for p in &mut s.poses {
        p.translation = -(oracle_rotation(&p.angles) * point);
    }
    encode_state(&inst.layout, &inst.ctx, &inst.nobs, &s)
}

fn violated_anti_collapse_rows(inst: &Instance, z: &[f64]) -> usize {
    (inst.layout.abs_rows..inst.problem.num_rows())
        .filter(|&i| inst.problem.row_activity(i, z) > inst.problem.rhs()[i] + 1e-12)
        .count()
}

#[test]
fn collapse_point_is_cut_off() {
    for seed in 0..10 {
        let inst = instance(seed, 120, 0.0, 0.0);
        assert!(!inst.layout.anti_collapse_rows.is_empty());
        for point in [Vector3::zeros(), Vector3::new(0.3, -0.2, 1.0), Vector3::new(0.0, 0.0, -4.0)] {
            let z = collapse_point(&inst, point);
            assert!(inst.problem.objective_value(&z) <= 1e-12, "collapse has zero LAE");
            assert!(violated_anti_collapse_rows(&inst, &z) >= 1, "seed {seed}");
        }
    }
}

#[test]
fn frozen_rows_admit_a_low_collapse() {
    let inst = instance(4, 120, 0.0, 0.0);
    let (mut p, mut layout) = build_lp(&inst.nobs, &inst.ctx, &SubproblemConfig::default()).unwrap();
    add_anti_collapse(&mut p, &mut layout, &inst.ctx, &inst.state, AntiCollapse::FrozenCenters).unwrap();
    let z = collapse_point(&inst, Vector3::new(0.0, 0.0, -1.0));
    assert!(check_feasible(&p, &z) <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, ..ProptestConfig::default() })]

    #[test]
    fn lp_value_is_the_lae_of_its_solution(seed in 0u64..1000, frames in 4usize..9, angle in 0.0f64..0.05) {
        let inst = instance(seed, frames, 0.3, angle);
        let sol = solve_lp(&inst.problem, &tight(), None).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let (markers, translations) = extract_solution(&sol, &inst.layout).unwrap();
        let mut s = inst.state.clone();
        s.markers = markers;
        for (p, t) in s.poses.iter_mut().zip(translations) {
            p.translation = t;
        }
        prop_assert!((sol.objective - eval_lae(&s, &inst.nobs)).abs() <= 1e-7);
        prop_assert!(sol.objective <= eval_lae(&inst.state, &inst.nobs) + 1e-9);
    }
}
