//! Accuracy of an estimate against ground truth after similarity alignment.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::alignment::{gauge_align, Similarity};
use crate::error::Result;
use crate::geometry::CameraIntrinsics;
use crate::observations::{CalibrationState, ObservationSet};
use crate::residuals::{eval_p, reprojection_rms, wand_length_stats, NeumaierSum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraError {
    /// Distance between aligned and true camera centers.
    pub center_error: f64,
    /// Geodesic angle between aligned and true orientations, degrees.
    pub rotation_error_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationMetrics {
    pub cameras: Vec<CameraError>,
    pub max_center_error: f64,
    pub max_rotation_error_deg: f64,
    /// Root-mean-square marker position error.
    pub marker_rms: f64,
    /// Pixel reprojection RMS of the estimate, when observations are given.
    pub reprojection_rms: Option<f64>,
    /// Spread of the aligned per-frame wand lengths.
    pub wand_length_std: f64,
    pub alignment: Similarity,
}

/// Rotation angle of `r`, accurate near zero.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = 0.5
        * nalgebra::Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

pub fn evaluate(
    estimate: &CalibrationState,
    truth: &CalibrationState,
    data: Option<(&ObservationSet, &[CameraIntrinsics])>,
) -> Result<EvaluationMetrics> {
    let (alignment, aligned) = gauge_align(estimate, truth)?;
    let cameras: Vec<CameraError> = aligned
        .poses
        .iter()
        .zip(&truth.poses)
        .map(|(a, t)| CameraError {
            center_error: (crate::geometry::camera_center(a) - crate::geometry::camera_center(t)).norm(),
            rotation_error_deg: rotation_angle(&(a.rotation() * t.rotation().transpose())).to_degrees(),
        })
        .collect();
    let sq: NeumaierSum = aligned.markers.iter().zip(&truth.markers).map(|(a, t)| (a - t).norm_squared()).collect();
    let reprojection = match data {
        Some((obs, k)) => {
            estimate.check_shape(obs)?;
            if k.len() != obs.num_cameras() {
                return Err(crate::CalibError::InvalidArgument(format!(
                    "{} intrinsics for {} cameras",
                    k.len(),
                    obs.num_cameras()
                )));
            }
            Some(reprojection_rms(eval_p(estimate, k, obs)?, obs.observations().len()))
        }
        None => None,
    };
    Ok(EvaluationMetrics {
        max_center_error: cameras.iter().map(|c| c.center_error).fold(0.0, f64::max),
        max_rotation_error_deg: cameras.iter().map(|c| c.rotation_error_deg).fold(0.0, f64::max),
        cameras,
        marker_rms: (sq.value() / truth.markers.len() as f64).sqrt(),
        reprojection_rms: reprojection,
        wand_length_std: wand_length_stats(&aligned.markers)?.std,
        alignment,
    })
}

impl EvaluationMetrics {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("camera,center_error_m,rotation_error_deg\n");
        for (n, c) in self.cameras.iter().enumerate() {
            out.push_str(&format!("{n},{:e},{:e}\n", c.center_error, c.rotation_error_deg));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("camera  center error (m)  rotation error (deg)\n");
        for (n, c) in self.cameras.iter().enumerate() {
            out.push_str(&format!("{n:>6}  {:>16.3e}  {:>20.3e}\n", c.center_error, c.rotation_error_deg));
        }
        out.push_str(&format!("marker RMS (m)        {:.3e}\n", self.marker_rms));
        match self.reprojection_rms {
            Some(r) => out.push_str(&format!("reprojection RMS (px) {r:.3e}\n")),
            None => out.push_str("reprojection RMS (px) n/a\n"),
        }
        out.push_str(&format!("wand length std (m)   {:.3e}\n", self.wand_length_std));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EulerAngles;
    use crate::simulator::{generate_scene, perturb_state, PerturbationMagnitudes, SceneSpec};
    use nalgebra::Vector3;

    #[test]
    fn rotation_angle_is_precise_near_zero() {
        let r = EulerAngles::new(1e-9, 0.0, 0.0).matrix();
        assert!((rotation_angle(&r) - 1e-9).abs() < 1e-20);
        let r = EulerAngles::new(0.0, 0.0, 2.5).matrix();
        assert!((rotation_angle(&r) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn truth_against_itself_is_exact() {
        let s = generate_scene(&SceneSpec { frames: 20, ..SceneSpec::default() }).unwrap();
        let m = evaluate(&s.truth.state, &s.truth.state, Some((&s.observations, &s.truth.intrinsics))).unwrap();
        assert!(m.max_center_error < 1e-12 && m.max_rotation_error_deg < 1e-12 && m.marker_rms < 1e-12);
        assert!(m.reprojection_rms.unwrap() < 1e-9 && m.wand_length_std < 1e-12);
    }

    #[test]
    fn similarity_of_truth_scores_zero() {
        let s = generate_scene(&SceneSpec { frames: 20, ..SceneSpec::default() }).unwrap();
        let sim = Similarity {
            rotation: EulerAngles::new(0.2, -0.4, 1.3).matrix(),
            translation: Vector3::new(3.0, -1.0, 2.0),
            scale: 0.6,
        };
        let moved = sim.apply_state(&s.truth.state);
        let m = evaluate(&moved, &s.truth.state, Some((&s.observations, &s.truth.intrinsics))).unwrap();
        assert!(m.max_center_error < 1e-10 && m.max_rotation_error_deg < 1e-8 && m.marker_rms < 1e-10);
        assert!(m.reprojection_rms.unwrap() < 1e-8);
    }

    #[test]
    fn unrefined_marker_error_matches_perturbation() {
        // Cameras are untouched so the alignment stays near identity. Each
        // coordinate has variance h^2 / 3, so the per-marker RMS tends to h.
        let s = generate_scene(&SceneSpec { frames: 150, ..SceneSpec::default() }).unwrap();
        let h = 0.05;
        let mag = PerturbationMagnitudes { angle: 0.0, translation: 0.0, marker: h };
        let p = perturb_state(&s.truth.state, &mag, 11, 10.0).unwrap();
        let m = evaluate(&p, &s.truth.state, None).unwrap();
        let expected = h;
        assert!((m.marker_rms - expected).abs() < 0.1 * expected, "{} vs {expected}", m.marker_rms);
        assert!(m.max_rotation_error_deg < 0.5 && (m.alignment.scale - 1.0).abs() < 0.01);
    }
}
