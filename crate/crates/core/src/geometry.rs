//! Rotations, pinhole projection and normalized image coordinates.
//!
//! Conventions: the world is right-handed with `z` up. A camera looks along
//! its own `+z` axis, with `+x` to the right of the image and `+y` down. A
//! pose maps a world point `x` to camera coordinates `R x + t`, where
//! `R = Rz(phi_z) Ry(phi_y) Rx(phi_x)` acts on column vectors.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Euler angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerAngles {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EulerAngles {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Each component wrapped into `(-pi, pi]`.
    pub fn normalized(&self) -> Self {
        Self::new(wrap_angle(self.x), wrap_angle(self.y), wrap_angle(self.z))
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// `Rz Ry Rx` without the finiteness check of [`rotation_from_euler`].
    pub fn matrix(&self) -> Matrix3<f64> {
        let (sx, cx) = self.x.sin_cos();
        let (sy, cy) = self.y.sin_cos();
        let (sz, cz) = self.z.sin_cos();
        Matrix3::new(
            cz * cy,
            cz * sy * sx - sz * cx,
            cz * sy * cx + sz * sx,
            sz * cy,
            sz * sy * sx + cz * cx,
            sz * sy * cx - cz * sx,
            -sy,
            cy * sx,
            cy * cx,
        )
    }

    /// Partial derivatives of [`EulerAngles::matrix`] with respect to
    /// `x`, `y` and `z`.
    pub fn matrix_derivatives(&self) -> [Matrix3<f64>; 3] {
        let (rx, ry, rz) = (elementary_x(self.x), elementary_y(self.y), elementary_z(self.z));
        let (sx, cx) = self.x.sin_cos();
        let (sy, cy) = self.y.sin_cos();
        let (sz, cz) = self.z.sin_cos();
        let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sx, -cx, 0.0, cx, -sx);
        let dry = Matrix3::new(-sy, 0.0, cy, 0.0, 0.0, 0.0, -cy, 0.0, -sy);
        let drz = Matrix3::new(-sz, -cz, 0.0, cz, -sz, 0.0, 0.0, 0.0, 0.0);
        [rz * ry * drx, rz * dry * rx, drz * ry * rx]
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn elementary_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn elementary_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn elementary_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rotation_from_euler(angles: &EulerAngles) -> Result<Matrix3<f64>> {
    if !angles.is_finite() {
        return Err(CalibError::InvalidArgument(format!(
            "non-finite Euler angles {angles:?}"
        )));
    }
    Ok(angles.matrix())
}

/// Angles reproducing `r` under the `Rz Ry Rx` convention, with the middle
/// angle in `[-pi/2, pi/2]`.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> EulerAngles {
    let y = -r[(2, 0)].clamp(-1.0, 1.0).asin();
    if r[(0, 0)].hypot(r[(1, 0)]) < 1e-12 {
        // Gimbal lock: only x - z (y = pi/2) or x + z (y = -pi/2) is
        // determined; put all of it on x.
        let x = if r[(2, 0)] < 0.0 {
            r[(0, 1)].atan2(r[(1, 1)])
        } else {
            (-r[(0, 1)]).atan2(r[(1, 1)])
        };
        return EulerAngles::new(x, y, 0.0);
    }
    let x = r[(2, 1)].atan2(r[(2, 2)]);
    let z = r[(1, 0)].atan2(r[(0, 0)]);
    EulerAngles::new(x, y, z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    /// Focal length in pixels.
    pub f: f64,
    /// Principal point, pixels.
    pub alpha: f64,
    pub beta: f64,
    /// Aspect ratio applied to the horizontal axis.
    pub gamma: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.f, self.alpha, self.beta, self.gamma].iter().all(|v| v.is_finite());
        if !finite || self.f <= 0.0 || self.gamma <= 0.0 {
            return Err(CalibError::InvalidArgument(format!(
                "intrinsics need finite values with f > 0 and gamma > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Camera extrinsics: orientation and camera-frame translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPose {
    pub angles: EulerAngles,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(angles: EulerAngles, translation: Vector3<f64>) -> Self {
        Self { angles, translation }
    }

    pub fn identity() -> Self {
        Self::new(EulerAngles::default(), Vector3::zeros())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.angles.matrix()
    }

    /// Pose with rotation `r` whose optical center sits at `center`.
    pub fn from_rotation_and_center(r: &Matrix3<f64>, center: &Vector3<f64>) -> Self {
        Self::new(euler_from_rotation(r), -(r * center))
    }

    /// Pose at `center` looking at `target`, with image `y` pointing as close
    /// to world `-z` as possible.
    pub fn look_at(center: &Vector3<f64>, target: &Vector3<f64>) -> Result<Self> {
        let forward = (target - center)
            .try_normalize(1e-12)
            .ok_or_else(|| CalibError::DegenerateGeometry("look-at target equals center".into()))?;
        let right = forward
            .cross(&Vector3::z())
            .try_normalize(1e-12)
            .ok_or_else(|| CalibError::DegenerateGeometry("camera looks straight up or down".into()))?;
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Ok(Self::from_rotation_and_center(&r, center))
    }

    pub fn is_finite(&self) -> bool {
        self.angles.is_finite() && self.translation.iter().all(|v| v.is_finite())
    }
}

/// Point lies on or behind the image plane of the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehindCamera {
    pub depth: f64,
}

/// Camera-frame coordinates of `x`.
pub fn to_camera(x: &Vector3<f64>, r: &Matrix3<f64>, t: &Vector3<f64>) -> Vector3<f64> {
    r * x + t
}

/// Pixel coordinates of `x` seen by a camera with rotation `r` and
/// translation `t`.
pub fn project_with(
    x: &Vector3<f64>,
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    k: &CameraIntrinsics,
) -> std::result::Result<Vector2<f64>, BehindCamera> {
    let p = to_camera(x, r, t);
    if p.z.is_nan() || p.z <= 0.0 {
        return Err(BehindCamera { depth: p.z });
    }
    Ok(Vector2::new(
        k.alpha + k.gamma * k.f * p.x / p.z,
        k.beta + k.f * p.y / p.z,
    ))
}

pub fn project(
    x: &Vector3<f64>,
    pose: &CameraPose,
    k: &CameraIntrinsics,
) -> std::result::Result<Vector2<f64>, BehindCamera> {
    project_with(x, &pose.rotation(), &pose.translation, k)
}

/// Pixel observation to normalized image coordinates.
pub fn normalize_fp(fp: &Vector2<f64>, k: &CameraIntrinsics) -> Vector2<f64> {
    Vector2::new((fp.x - k.alpha) / (k.gamma * k.f), (fp.y - k.beta) / k.f)
}

/// Inverse of [`normalize_fp`].
pub fn denormalize_fp(q: &Vector2<f64>, k: &CameraIntrinsics) -> Vector2<f64> {
    Vector2::new(k.alpha + k.gamma * k.f * q.x, k.beta + k.f * q.y)
}

/// World position of the optical center, `-R' t`.
pub fn camera_center(pose: &CameraPose) -> Vector3<f64> {
    -(pose.rotation().transpose() * pose.translation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k500() -> CameraIntrinsics {
        CameraIntrinsics { f: 500.0, alpha: 320.0, beta: 240.0, gamma: 1.0 }
    }

    /// Naive triple-loop product of explicitly written elementary rotations.
    fn oracle_rotation(a: [f64; 3]) -> [[f64; 3]; 3] {
        let (cx, sx) = (a[0].cos(), a[0].sin());
        let (cy, sy) = (a[1].cos(), a[1].sin());
        let (cz, sz) = (a[2].cos(), a[2].sin());
        let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
        let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
        let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
        let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
            let mut c = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        c[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            c
        };
        mul(mul(rz, ry), rx)
    }

    #[test]
    fn zero_angles_give_identity() {
        let r = rotation_from_euler(&EulerAngles::default()).unwrap();
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rotation_from_euler(&EulerAngles::new(0.0, 0.0, PI / 2.0)).unwrap();
        assert_abs_diff_eq!(r * Vector3::x(), Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn rotation_matches_elementary_product() {
        let a = [0.3, -0.7, 1.1];
        let r = rotation_from_euler(&EulerAngles::from_array(a)).unwrap();
        let o = oracle_rotation(a);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[(i, j)] - o[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_angles_are_rejected() {
        assert!(rotation_from_euler(&EulerAngles::new(f64::NAN, 0.0, 0.0)).is_err());
    }

    #[test]
    fn thousand_rotations_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a = EulerAngles::new(
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
            );
            let r = a.matrix();
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() <= 1e-12);
            assert!((r.determinant() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_examples() {
        let pose = CameraPose::identity();
        let k = k500();
        assert_eq!(project(&Vector3::new(0.0, 0.0, 2.0), &pose, &k).unwrap(), Vector2::new(320.0, 240.0));
        assert_eq!(project(&Vector3::new(1.0, 0.0, 2.0), &pose, &k).unwrap(), Vector2::new(570.0, 240.0));
        assert!(project(&Vector3::new(0.0, 0.0, -1.0), &pose, &k).is_err());
    }

    #[test]
    fn normalization_examples() {
        let k = k500();
        assert_eq!(normalize_fp(&Vector2::new(320.0, 240.0), &k), Vector2::zeros());
        assert_eq!(normalize_fp(&Vector2::new(570.0, 240.0), &k), Vector2::new(0.5, 0.0));
    }

    #[test]
    fn normalized_projection_matches_ideal_camera() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut done = 0;
        while done < 100 {
            let pose = CameraPose::new(
                EulerAngles::new(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0)),
                Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
            );
            let k = CameraIntrinsics {
                f: rng.random_range(300.0..900.0),
                alpha: rng.random_range(200.0..400.0),
                beta: rng.random_range(150.0..300.0),
                gamma: rng.random_range(0.8..1.2),
            };
            let x = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let p = pose.rotation() * x + pose.translation;
            if p.z <= 0.1 {
                continue;
            }
            let q = normalize_fp(&project(&x, &pose, &k).unwrap(), &k);
            assert!((q - Vector2::new(p.x / p.z, p.y / p.z)).abs().max() <= 1e-12);
            done += 1;
        }
    }

    #[test]
    fn camera_center_examples() {
        assert_eq!(camera_center(&CameraPose::identity()), Vector3::zeros());
        let pose = CameraPose::new(EulerAngles::default(), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(camera_center(&pose), Vector3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn point_ahead_of_center_has_requested_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let pose = CameraPose::new(
                EulerAngles::new(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0)),
                Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
            );
            let eps = rng.random_range(0.01..1.0);
            let axis = pose.rotation().row(2).transpose();
            let x = camera_center(&pose) + eps * axis;
            let depth = (pose.rotation() * x + pose.translation).z;
            assert!((depth - eps).abs() <= 1e-12);
        }
    }

    #[test]
    fn look_at_points_the_optical_axis_at_the_target() {
        let c = Vector3::new(4.0, 1.0, 2.7);
        let target = Vector3::new(0.0, 0.0, 1.0);
        let pose = CameraPose::look_at(&c, &target).unwrap();
        assert_abs_diff_eq!(camera_center(&pose), c, epsilon = 1e-12);
        let q = normalize_fp(&project(&target, &pose, &k500()).unwrap(), &k500());
        assert_abs_diff_eq!(q, Vector2::zeros(), epsilon = 1e-12);
        // Image y points downwards in the world.
        let below = project(&(target - Vector3::z() * 0.1), &pose, &k500()).unwrap();
        assert!(below.y > 240.0);
    }

    #[test]
    fn euler_round_trip() {
        let a = EulerAngles::new(0.4, -1.2, 2.9);
        let b = euler_from_rotation(&a.matrix());
        assert_abs_diff_eq!(a.matrix(), b.matrix(), epsilon = 1e-14);
        assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12 && (a.z - b.z).abs() < 1e-12);
    }

    #[test]
    fn euler_round_trip_at_gimbal_lock() {
        for y in [PI / 2.0, -PI / 2.0] {
            let a = EulerAngles::new(0.7, y, -0.4);
            let b = euler_from_rotation(&a.matrix());
            assert_abs_diff_eq!(a.matrix(), b.matrix(), epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_matrices_match_finite_differences() {
        let a = EulerAngles::new(0.3, -0.5, 1.7);
        let d = a.matrix_derivatives();
        let h = 1e-6;
        for (i, di) in d.iter().enumerate() {
            let mut p = a.as_array();
            let mut m = a.as_array();
            p[i] += h;
            m[i] -= h;
            let fd = (EulerAngles::from_array(p).matrix() - EulerAngles::from_array(m).matrix()) / (2.0 * h);
            assert!((fd - di).abs().max() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn wrap_angle_lands_in_half_open_interval(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!((w.sin() - a.sin()).abs() < 1e-9 && (w.cos() - a.cos()).abs() < 1e-9);
        }

        #[test]
        fn projection_is_invariant_to_a_common_rigid_motion(
            gx in -1.0f64..1.0, gy in -1.0f64..1.0, gz in -1.0f64..1.0,
            tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0,
        ) {
            let k = k500();
            let pose = CameraPose::look_at(&Vector3::new(3.0, 0.5, 2.5), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
            let x = Vector3::new(0.2, -0.3, 0.8);
            let q = EulerAngles::new(gx, gy, gz).matrix();
            let shift = Vector3::new(tx, ty, tz);
            // World moves by x -> Q x + s; camera rotation R -> R Q', center c -> Q c + s.
            let r2 = pose.rotation() * q.transpose();
            let c2 = q * camera_center(&pose) + shift;
            let moved = CameraPose::from_rotation_and_center(&r2, &c2);
            let p1 = project(&x, &pose, &k).unwrap();
            let p2 = project(&(q * x + shift), &moved, &k).unwrap();
            prop_assert!((p1 - p2).abs().max() <= 1e-10);
        }
    }
}
