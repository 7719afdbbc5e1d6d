//! Similarity alignment of an estimated scene onto a reference scene.
//!
//! The refined state is only defined up to a global rotation, translation
//! and scale. Before comparing it with ground truth, the best-fit
//! similarity is found in closed form from the SVD of the cross-covariance
//! of the two point sets (camera centers and markers).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::geometry::{euler_from_rotation, CameraPose};
use crate::observations::CalibrationState;

/// `p -> scale * rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros(), scale: 1.0 }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) / self.scale, scale: 1.0 / self.scale }
    }

    /// Moves the whole scene: markers and camera centers follow the map and
    /// camera orientations rotate with the world.
    pub fn apply_state(&self, state: &CalibrationState) -> CalibrationState {
        let rt = self.rotation.transpose();
        let poses = state
            .poses
            .iter()
            .map(|p| {
                let r = p.rotation() * rt;
                let center = self.apply(&crate::geometry::camera_center(p));
                CameraPose::new(euler_from_rotation(&r), -(r * center))
            })
            .collect();
        CalibrationState { poses, markers: state.markers.iter().map(|x| self.apply(x)).collect() }
    }
}

/// Camera centers followed by markers.
pub fn scene_points(state: &CalibrationState) -> Vec<Vector3<f64>> {
    let mut pts = state.camera_centers();
    pts.extend_from_slice(&state.markers);
    pts
}

/// Least-squares similarity mapping `source[i]` onto `target[i]`.
pub fn fit_similarity(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<Similarity> {
    if source.len() != target.len() {
        return Err(CalibError::InvalidArgument(format!(
            "cannot align {} points onto {}",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(CalibError::DegenerateGeometry("alignment needs at least three points".into()));
    }
    let n = source.len() as f64;
    let mu_s = source.iter().sum::<Vector3<f64>>() / n;
    let mu_t = target.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    let mut spread_t = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        let ds = s - mu_s;
        let dt = t - mu_t;
        cov += dt * ds.transpose();
        spread_t += dt * dt.transpose();
        var_s += ds.norm_squared();
    }
    cov /= n;
    var_s /= n;

    let sv = spread_t.symmetric_eigenvalues();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let middle = sv.sum() - lo - hi;
    if !(hi > 0.0) || middle <= 1e-12 * hi || var_s <= 0.0 {
        return Err(CalibError::DegenerateGeometry("reference points are collinear or coincident".into()));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * v_t;
    let trace_ds = (0..3).map(|i| svd.singular_values[i] * d[(i, i)]).sum::<f64>();
    let scale = trace_ds / var_s;
    let translation = mu_t - scale * rotation * mu_s;
    Ok(Similarity { rotation, translation, scale })
}

/// Aligns `estimate` onto `reference` using camera centers and markers.
pub fn gauge_align(
    estimate: &CalibrationState,
    reference: &CalibrationState,
) -> Result<(Similarity, CalibrationState)> {
    if estimate.poses.len() != reference.poses.len() || estimate.markers.len() != reference.markers.len() {
        return Err(CalibError::InvalidArgument(format!(
            "estimate has {} cameras and {} markers, reference has {} and {}",
            estimate.poses.len(),
            estimate.markers.len(),
            reference.poses.len(),
            reference.markers.len()
        )));
    }
    let sim = fit_similarity(&scene_points(estimate), &scene_points(reference))?;
    Ok((sim, sim.apply_state(estimate)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EulerAngles;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng) -> CalibrationState {
        let mut v = || Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0));
        let markers = (0..10).map(|_| v()).collect();
        let poses = (0..3)
            .map(|_| CameraPose::new(EulerAngles::new(0.3, -0.2, 1.0), v()))
            .collect();
        CalibrationState { poses, markers }
    }

    #[test]
    fn identity_for_identical_scenes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_state(&mut rng);
        let (sim, _) = gauge_align(&s, &s).unwrap();
        assert_abs_diff_eq!(sim.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(sim.translation, Vector3::zeros(), epsilon = 1e-12);
        assert!((sim.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_rotation_about_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(&mut rng);
        let r = EulerAngles::new(0.0, 0.0, 30f64.to_radians()).matrix();
        let rotated = Similarity { rotation: r, translation: Vector3::zeros(), scale: 1.0 }.apply_state(&s);
        // Aligning the original onto the rotated copy must find the rotation.
        let (sim, _) = gauge_align(&s, &rotated).unwrap();
        assert_abs_diff_eq!(sim.rotation, r, epsilon = 1e-10);
    }

    #[test]
    fn random_similarity_is_inverted() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = random_state(&mut rng);
            let mut a = || rng.random_range(-3.0..3.0);
            let sim = Similarity {
                rotation: EulerAngles::new(a(), a() / 2.0, a()).matrix(),
                translation: Vector3::new(a(), a(), a()),
                scale: 0.3 + a().abs(),
            };
            let (found, aligned) = gauge_align(&sim.apply_state(&s), &s).unwrap();
            let inv = sim.inverse();
            assert_abs_diff_eq!(found.rotation, inv.rotation, epsilon = 1e-9);
            assert_abs_diff_eq!(found.translation, inv.translation, epsilon = 1e-9);
            assert!((found.scale - inv.scale).abs() < 1e-9);
            for (x, y) in aligned.markers.iter().zip(&s.markers) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn collinear_reference_is_rejected() {
        let pts: Vec<Vector3<f64>> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(fit_similarity(&pts, &pts), Err(CalibError::DegenerateGeometry(_))));
    }

    #[test]
    fn state_transform_preserves_image_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_state(&mut rng);
        let sim = Similarity {
            rotation: EulerAngles::new(0.4, 0.1, -0.7).matrix(),
            translation: Vector3::new(1.0, -2.0, 0.5),
            scale: 1.7,
        };
        let moved = sim.apply_state(&s);
        for (p, q) in s.poses.iter().zip(&moved.poses) {
            for (x, y) in s.markers.iter().zip(&moved.markers) {
                let a = p.rotation() * x + p.translation;
                let b = q.rotation() * y + q.translation;
                assert_abs_diff_eq!(a * 1.7, b, epsilon = 1e-10);
            }
        }
    }
}
