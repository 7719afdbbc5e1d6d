use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use wandcal_core::alignment::Similarity;
use wandcal_core::evaluate::evaluate;
use wandcal_core::refine::{refine, RefineConfig, Termination};
use wandcal_core::residuals::{eval_e, wand_length_stats};
use wandcal_core::simulator::{generate_scene, perturb_state, PerturbationMagnitudes, SceneSpec};

#[test]
fn truth_is_a_fixed_point() {
    let s = generate_scene(&SceneSpec { frames: 25, seed: 2, ..SceneSpec::default() }).unwrap();
    let (out, report) = refine(&s.truth.state, &s.observations, &s.truth.intrinsics, &RefineConfig::default()).unwrap();
    assert_eq!(report.iterations.len(), 1);
    assert_eq!(report.termination, Termination::ObjectiveFloor);
    assert!(report.final_e <= 1e-16);
    let m = evaluate(&out, &s.truth.state, None).unwrap();
    assert!(m.max_center_error < 1e-6);
}

#[test]
fn small_noise_free_scene_is_recovered() {
    let s = generate_scene(&SceneSpec { frames: 30, seed: 6, ..SceneSpec::default() }).unwrap();
    let init = perturb_state(&s.truth.state, &PerturbationMagnitudes::standard(), 60, 10.0).unwrap();
    let cfg = RefineConfig::default();
    let (out, report) = refine(&init, &s.observations, &s.truth.intrinsics, &cfg).unwrap();
    let m = evaluate(&out, &s.truth.state, Some((&s.observations, &s.truth.intrinsics))).unwrap();
    assert!(m.max_center_error < 1e-3 && m.max_rotation_error_deg < 0.1, "{}", m.to_table());
    assert!(report.final_reprojection_rms.unwrap() < 1e-6);

    // Accepted iterations never raise the squared objective, and every
    // iterate stays in the box.
    let mut prev = report.initial_e;
    for r in &report.iterations {
        assert!(r.e <= prev);
        prev = r.e;
    }
    assert!(out.max_abs_coordinate() <= cfg.subproblem.bound);
    let mean = wand_length_stats(&out.markers).unwrap().mean;
    assert!((mean - 0.5).abs() <= 1e-9 * 0.5);
}

#[test]
fn noisy_scene_keeps_lae_monotone_at_fixed_angles() {
    let s = generate_scene(&SceneSpec { frames: 30, noise_sigma: 0.5, seed: 8, ..SceneSpec::default() }).unwrap();
    let init = perturb_state(&s.truth.state, &PerturbationMagnitudes::standard(), 80, 10.0).unwrap();
    let (_, report) = refine(&init, &s.observations, &s.truth.intrinsics, &RefineConfig::default()).unwrap();
    for r in &report.iterations {
        assert!(r.lae_after_lp <= r.lae_before_lp + 1e-7, "iteration {}", r.iteration);
    }
    assert!(report.final_reprojection_rms.unwrap() <= 0.75);
}

#[test]
fn termination_without_line_search_or_warm_start() {
    let s = generate_scene(&SceneSpec { frames: 12, seed: 3, ..SceneSpec::default() }).unwrap();
    let init = perturb_state(&s.truth.state, &PerturbationMagnitudes::standard(), 30, 10.0).unwrap();
    let mut cfg = RefineConfig { max_iterations: 4, warm_start: false, ..RefineConfig::default() };
    cfg.line_search.enabled = false;
    let (_, report) = refine(&init, &s.observations, &s.truth.intrinsics, &cfg).unwrap();
    assert!(report.iterations.len() <= 4);
    assert!(report.final_e < report.initial_e);
    assert!(report.iterations.iter().filter(|r| r.accepted).all(|r| r.step == 1.0));
}

#[test]
fn init_outside_the_box_is_rejected() {
    let s = generate_scene(&SceneSpec { frames: 6, ..SceneSpec::default() }).unwrap();
    let mut cfg = RefineConfig::default();
    cfg.subproblem.bound = 1.0;
    assert!(refine(&s.truth.state, &s.observations, &s.truth.intrinsics, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn squared_objective_is_rigid_invariant_and_scales_quadratically(
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in -3.1f64..3.1,
        shift in prop::array::uniform3(-2.0f64..2.0),
        scale in 0.2f64..5.0,
        seed in 0u64..50,
    ) {
        prop_assume!(Vector3::from(axis).norm() > 1e-3);
        let s = generate_scene(&SceneSpec { frames: 10, noise_sigma: 0.5, seed, ..SceneSpec::default() }).unwrap();
        let nobs = s.observations.normalized(&s.truth.intrinsics).unwrap();
        let e0 = eval_e(&s.truth.state, &nobs);
        let rotation = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), angle).into_inner();
        let rigid = Similarity { rotation, translation: Vector3::from(shift), scale: 1.0 };
        let e1 = eval_e(&rigid.apply_state(&s.truth.state), &nobs);
        prop_assert!((e1 - e0).abs() < 1e-10, "{} vs {}", e1, e0);
        let scaled = Similarity { scale, ..rigid };
        let e2 = eval_e(&scaled.apply_state(&s.truth.state), &nobs);
        prop_assert!((e2 - scale * scale * e0).abs() <= 1e-9 * (1.0 + e2));
    }
}
