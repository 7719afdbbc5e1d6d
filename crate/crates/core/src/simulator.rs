//! Synthetic rigs and wand sequences.
//!
//! Cameras sit on a ring above the capture volume and look at a common
//! target. The wand midpoint performs a clamped random walk with a fresh
//! random orientation each frame; the opening frames stay below a low
//! ceiling under every camera. A marker is visible when it projects inside
//! the image in front of the camera and survives random dropout; frames are
//! redrawn until both markers are seen by at least two cameras.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::angles::MIN_OBSERVATIONS;
use crate::error::{CalibError, Result};
use crate::geometry::{project_with, CameraIntrinsics, CameraPose, EulerAngles};
use crate::observations::{CalibrationState, Observation, ObservationSet};

const MAX_FRAME_ATTEMPTS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub cameras: usize,
    pub frames: usize,
    /// Distance between the two wand markers, meters.
    pub wand_length: f64,
    /// Horizontal distance of the cameras from the vertical axis.
    pub ring_radius: f64,
    /// Camera heights are drawn uniformly from this range.
    pub camera_height: [f64; 2],
    pub look_at: [f64; 3],
    pub focal_length: [f64; 2],
    pub aspect_ratio: [f64; 2],
    /// Image width and height in pixels; the principal point is the center.
    pub image_size: [f64; 2],
    /// Half-width of the square footprint of the capture volume.
    pub volume_half_width: f64,
    /// Allowed marker heights.
    pub volume_height: [f64; 2],
    /// Leading markers held under the low ceiling (rounded up to frames).
    pub low_start_markers: usize,
    pub low_ceiling: f64,
    /// Standard deviation of the midpoint random walk per frame.
    pub step: f64,
    /// Gaussian pixel noise standard deviation.
    pub noise_sigma: f64,
    /// Probability that an otherwise visible observation is dropped.
    pub dropout: f64,
    /// Minimum depth for a marker to count as visible.
    pub min_depth: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            cameras: 4,
            frames: 150,
            wand_length: 0.5,
            ring_radius: 4.0,
            camera_height: [2.5, 3.0],
            look_at: [0.0, 0.0, 1.0],
            focal_length: [550.0, 650.0],
            aspect_ratio: [0.98, 1.02],
            image_size: [640.0, 480.0],
            volume_half_width: 1.2,
            volume_height: [0.1, 2.0],
            low_start_markers: 200,
            low_ceiling: 0.9,
            step: 0.15,
            noise_sigma: 0.0,
            dropout: 0.0,
            min_depth: 0.1,
            seed: 1,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CalibError::InvalidArgument(m));
        let range_ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if self.cameras < 2 {
            return fail(format!("at least 2 cameras are required, got {}", self.cameras));
        }
        if self.frames < 2 {
            return fail(format!("at least 2 frames are required, got {}", self.frames));
        }
        if !(self.wand_length > 0.0 && self.wand_length.is_finite()) {
            return fail("wand length must be positive".into());
        }
        for (name, r) in [
            ("camera_height", self.camera_height),
            ("focal_length", self.focal_length),
            ("aspect_ratio", self.aspect_ratio),
            ("volume_height", self.volume_height),
        ] {
            if !range_ok(r) {
                return fail(format!("{name} must be an ordered finite range"));
            }
        }
        if self.focal_length[0] <= 0.0 || self.aspect_ratio[0] <= 0.0 {
            return fail("focal length and aspect ratio must be positive".into());
        }
        if self.camera_height[0] <= self.low_ceiling {
            return fail(format!(
                "cameras (lowest {}) must sit above the low-start ceiling {}",
                self.camera_height[0], self.low_ceiling
            ));
        }
        if self.low_ceiling - self.volume_height[0] < self.wand_length {
            return fail("the low-start zone is too thin for the wand".into());
        }
        if !(self.ring_radius > 0.0 && self.volume_half_width > 0.0 && self.step > 0.0) {
            return fail("ring radius, volume width and step must be positive".into());
        }
        if !(self.image_size[0] > 0.0 && self.image_size[1] > 0.0) {
            return fail("image size must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise sigma must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)".into());
        }
        Ok(())
    }

    /// Frames held under the low ceiling.
    pub fn low_start_frames(&self) -> usize {
        self.low_start_markers.div_ceil(2).min(self.frames)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub intrinsics: Vec<CameraIntrinsics>,
    pub state: CalibrationState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub truth: GroundTruth,
    pub observations: ObservationSet,
    /// Cameras whose frustum contains each marker, before dropout.
    pub frustum_counts: Vec<usize>,
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn build_rig(spec: &SceneSpec, rng: &mut impl Rng) -> Result<(Vec<CameraPose>, Vec<CameraIntrinsics>)> {
    let target = Vector3::from(spec.look_at);
    let phase = rng.random_range(0.0..2.0 * PI);
    let mut poses = Vec::with_capacity(spec.cameras);
    let mut intrinsics = Vec::with_capacity(spec.cameras);
    for n in 0..spec.cameras {
        let theta = phase + 2.0 * PI * n as f64 / spec.cameras as f64 + rng.random_range(-0.15..0.15);
        let height = uniform(rng, spec.camera_height);
        let center = Vector3::new(spec.ring_radius * theta.cos(), spec.ring_radius * theta.sin(), height);
        poses.push(CameraPose::look_at(&center, &target)?);
        intrinsics.push(CameraIntrinsics {
            f: uniform(rng, spec.focal_length),
            alpha: spec.image_size[0] / 2.0,
            beta: spec.image_size[1] / 2.0,
            gamma: uniform(rng, spec.aspect_ratio),
        });
    }
    Ok((poses, intrinsics))
}

/// Noise-free pixel projection if `x` is inside the camera's view.
fn visible_projection(
    spec: &SceneSpec,
    x: &Vector3<f64>,
    pose: &CameraPose,
    k: &CameraIntrinsics,
) -> Option<Vector2<f64>> {
    let r = pose.rotation();
    let depth = (r * x + pose.translation).z;
    if depth < spec.min_depth {
        return None;
    }
    let uv = project_with(x, &r, &pose.translation, k).ok()?;
    (uv.x >= 0.0 && uv.x < spec.image_size[0] && uv.y >= 0.0 && uv.y < spec.image_size[1]).then_some(uv)
}

/// Generates a rig, a wand sequence and its observations.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (poses, intrinsics) = build_rig(spec, &mut rng)?;
    let walk = Normal::new(0.0, spec.step).expect("validated step");
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let half = spec.wand_length / 2.0;
    let low_frames = spec.low_start_frames();

    let mut mid = Vector3::new(0.0, 0.0, 0.5 * (spec.volume_height[0] + spec.low_ceiling));
    let mut markers = Vec::with_capacity(2 * spec.frames);
    let mut projections: Vec<Vec<Option<Vector2<f64>>>> = Vec::with_capacity(2 * spec.frames);
    for frame in 0..spec.frames {
        let ceiling = if frame < low_frames { spec.low_ceiling } else { spec.volume_height[1] };
        let mut accepted = false;
        for _ in 0..MAX_FRAME_ATTEMPTS {
            let w = spec.volume_half_width;
            let cand = Vector3::new(
                (mid.x + walk.sample(&mut rng)).clamp(-w, w),
                (mid.y + walk.sample(&mut rng)).clamp(-w, w),
                (mid.z + walk.sample(&mut rng)).clamp(spec.volume_height[0] + half, ceiling - half),
            );
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            let dir = Vector3::from(dir);
            let ends = [cand - dir * half, cand + dir * half];
            if ends.iter().any(|e| e.z < spec.volume_height[0] || e.z > ceiling) {
                continue;
            }
            let views: Vec<Vec<Option<Vector2<f64>>>> = ends
                .iter()
                .map(|e| poses.iter().zip(&intrinsics).map(|(p, k)| visible_projection(spec, e, p, k)).collect())
                .collect();
            if views.iter().all(|v| v.iter().flatten().count() >= 2) {
                mid = cand;
                markers.extend_from_slice(&ends);
                projections.extend(views);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(CalibError::DegenerateGeometry(format!(
                "no wand placement in frame {frame} is seen by two cameras"
            )));
        }
    }

    let mut observations = Vec::new();
    let mut frustum_counts = Vec::with_capacity(markers.len());
    for (m, views) in projections.iter().enumerate() {
        let inside: Vec<usize> = (0..views.len()).filter(|&n| views[n].is_some()).collect();
        frustum_counts.push(inside.len());
        let kept = loop {
            let kept: Vec<usize> = inside.iter().copied().filter(|_| !rng.random_bool(spec.dropout)).collect();
            if kept.len() >= 2 {
                break kept;
            }
        };
        for n in kept {
            let uv = views[n].expect("inside frustum");
            observations.push(Observation {
                marker: m,
                camera: n,
                u: uv.x + noise.sample(&mut rng),
                v: uv.y + noise.sample(&mut rng),
            });
        }
    }
    let observations = ObservationSet::new(markers.len(), spec.cameras, spec.wand_length, observations)?;
    if let Some(n) = observations.counts_per_camera().iter().position(|&c| c < MIN_OBSERVATIONS) {
        return Err(CalibError::DegenerateGeometry(format!("camera {n} sees fewer than {MIN_OBSERVATIONS} markers")));
    }
    Ok(Scene {
        truth: GroundTruth { intrinsics, state: CalibrationState { poses, markers } },
        observations,
        frustum_counts,
    })
}

/// Uniform perturbation half-widths: radians for angles, meters otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationMagnitudes {
    pub angle: f64,
    pub translation: f64,
    pub marker: f64,
}

impl PerturbationMagnitudes {
    /// 5 degrees, 0.2 m on translations and 0.1 m on markers.
    pub fn standard() -> Self {
        Self { angle: 5f64.to_radians(), translation: 0.2, marker: 0.1 }
    }
}

/// Adds independent uniform noise to every angle, translation component
/// and marker coordinate, then clamps coordinates to `[-bound, bound]`.
pub fn perturb_state(
    truth: &CalibrationState,
    mag: &PerturbationMagnitudes,
    seed: u64,
    bound: f64,
) -> Result<CalibrationState> {
    if !(mag.angle >= 0.0 && mag.translation >= 0.0 && mag.marker >= 0.0) {
        return Err(CalibError::InvalidArgument(format!("perturbation magnitudes must be non-negative: {mag:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |h: f64| if h == 0.0 { 0.0 } else { rng.random_range(-h..=h) };
    let mut out = truth.clone();
    for p in &mut out.poses {
        let a = p.angles.as_array().map(|v| v + jitter(mag.angle));
        p.angles = EulerAngles::from_array(a);
        p.translation = p.translation.map(|v| (v + jitter(mag.translation)).clamp(-bound, bound));
    }
    for x in &mut out.markers {
        *x = x.map(|v| (v + jitter(mag.marker)).clamp(-bound, bound));
    }
    Ok(out)
}
