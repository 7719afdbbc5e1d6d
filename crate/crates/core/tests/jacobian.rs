use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wandcal_core::angles::angle_jacobian;
use wandcal_core::geometry::{CameraPose, EulerAngles};
use wandcal_core::observations::{NormalizedObservation, NormalizedObservations};

/// Stacked residuals `[U, V, ...]` of camera 0 written out from the
/// elementary rotations.
fn residuals(a: [f64; 3], t: &Vector3<f64>, markers: &[Vector3<f64>], obs: &NormalizedObservations) -> Vec<f64> {
    let (sx, cx) = a[0].sin_cos();
    let (sy, cy) = a[1].sin_cos();
    let (sz, cz) = a[2].sin_cos();
    let rx = nalgebra::Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = nalgebra::Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = nalgebra::Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    let r = rz * ry * rx;
    obs.entries
        .iter()
        .flat_map(|e| {
            let p = r * markers[e.marker] + t;
            [e.u * p.z - p.x, e.v * p.z - p.y]
        })
        .collect()
}

#[test]
fn analytic_jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let angles = [0, 1, 2].map(|_| rng.random_range(-3.0..3.0));
        let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..5.0));
        let markers: Vec<Vector3<f64>> = (0..6)
            .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0)))
            .collect();
        let entries = (0..6)
            .map(|m| NormalizedObservation { marker: m, camera: 0, u: rng.random_range(-0.5..0.5), v: rng.random_range(-0.5..0.5) })
            .collect();
        let obs = NormalizedObservations::from_entries(6, 1, entries);
        let pose = CameraPose::new(EulerAngles::from_array(angles), t);
        let jac = angle_jacobian(0, &pose, &markers, &obs);
        for i in 0..3 {
            let (mut up, mut dn) = (angles, angles);
            up[i] += h;
            dn[i] -= h;
            let fd: Vec<f64> = residuals(up, &t, &markers, &obs)
                .iter()
                .zip(residuals(dn, &t, &markers, &obs))
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
            for (row, d) in jac.iter().zip(&fd) {
                worst = worst.max((row[i] - d).abs() / scale);
            }
        }
    }
    assert!(worst < 1e-5, "worst relative deviation {worst:e}");
}
