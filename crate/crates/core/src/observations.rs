//! Image observations, the visibility mask and the estimated scene state.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::geometry::{camera_center, normalize_fp, CameraIntrinsics, CameraPose};

/// Pixel observation of `marker` in `camera`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub marker: usize,
    pub camera: usize,
    pub u: f64,
    pub v: f64,
}

/// Observations of `num_markers` wand markers by `num_cameras` cameras.
///
/// Markers `2k` and `2k + 1` are the two ends of the wand in frame `k`.
/// A marker is visible in a camera exactly when an observation exists for
/// the pair, so the mask is implied by the observation list.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    num_markers: usize,
    num_cameras: usize,
    wand_length: f64,
    /// Sorted by `(marker, camera)`.
    observations: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(
        num_markers: usize,
        num_cameras: usize,
        wand_length: f64,
        mut observations: Vec<Observation>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(CalibError::InvalidArgument(msg));
        if num_markers == 0 || num_markers % 2 != 0 {
            return bad(format!("marker count {num_markers} must be positive and even"));
        }
        if num_cameras == 0 {
            return bad("at least one camera is required".into());
        }
        if !(wand_length.is_finite() && wand_length > 0.0) {
            return bad(format!("wand length {wand_length} must be positive"));
        }
        observations.sort_by_key(|o| (o.marker, o.camera));
        let mut per_marker = vec![0usize; num_markers];
        for (i, o) in observations.iter().enumerate() {
            if o.marker >= num_markers || o.camera >= num_cameras {
                return bad(format!(
                    "observation of marker {} in camera {} is out of range",
                    o.marker, o.camera
                ));
            }
            if !(o.u.is_finite() && o.v.is_finite()) {
                return bad(format!("observation of marker {} in camera {} is not finite", o.marker, o.camera));
            }
            if i > 0 && observations[i - 1].marker == o.marker && observations[i - 1].camera == o.camera {
                return bad(format!("marker {} is observed twice by camera {}", o.marker, o.camera));
            }
            per_marker[o.marker] += 1;
        }
        if let Some(m) = per_marker.iter().position(|&c| c < 2) {
            return bad(format!(
                "marker {m} is seen by {} cameras; every marker needs at least two",
                per_marker[m]
            ));
        }
        Ok(Self { num_markers, num_cameras, wand_length, observations })
    }

    pub fn num_markers(&self) -> usize {
        self.num_markers
    }

    pub fn num_cameras(&self) -> usize {
        self.num_cameras
    }

    pub fn num_frames(&self) -> usize {
        self.num_markers / 2
    }

    pub fn wand_length(&self) -> f64 {
        self.wand_length
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn get(&self, marker: usize, camera: usize) -> Option<&Observation> {
        self.observations
            .binary_search_by_key(&(marker, camera), |o| (o.marker, o.camera))
            .ok()
            .map(|i| &self.observations[i])
    }

    pub fn is_visible(&self, marker: usize, camera: usize) -> bool {
        self.get(marker, camera).is_some()
    }

    /// Dense `M x N` visibility mask.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        let mut w = vec![vec![false; self.num_cameras]; self.num_markers];
        for o in &self.observations {
            w[o.marker][o.camera] = true;
        }
        w
    }

    /// Markers seen by each camera.
    pub fn counts_per_camera(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_cameras];
        for o in &self.observations {
            c[o.camera] += 1;
        }
        c
    }

    pub fn normalized(&self, intrinsics: &[CameraIntrinsics]) -> Result<NormalizedObservations> {
        if intrinsics.len() != self.num_cameras {
            return Err(CalibError::InvalidArgument(format!(
                "{} intrinsics given for {} cameras",
                intrinsics.len(),
                self.num_cameras
            )));
        }
        for k in intrinsics {
            k.validate()?;
        }
        let entries = self
            .observations
            .iter()
            .map(|o| {
                let q = normalize_fp(&Vector2::new(o.u, o.v), &intrinsics[o.camera]);
                NormalizedObservation { marker: o.marker, camera: o.camera, u: q.x, v: q.y }
            })
            .collect();
        Ok(NormalizedObservations::from_entries(self.num_markers, self.num_cameras, entries))
    }
}

/// Observation in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedObservation {
    pub marker: usize,
    pub camera: usize,
    pub u: f64,
    pub v: f64,
}

/// Normalized observations with a per-camera index.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedObservations {
    pub num_markers: usize,
    pub num_cameras: usize,
    /// Sorted by `(marker, camera)`.
    pub entries: Vec<NormalizedObservation>,
    /// Indices into `entries` for each camera, in marker order.
    pub by_camera: Vec<Vec<usize>>,
}

impl NormalizedObservations {
    pub fn from_entries(
        num_markers: usize,
        num_cameras: usize,
        mut entries: Vec<NormalizedObservation>,
    ) -> Self {
        entries.sort_by_key(|e| (e.marker, e.camera));
        let mut by_camera = vec![Vec::new(); num_cameras];
        for (i, e) in entries.iter().enumerate() {
            by_camera[e.camera].push(i);
        }
        Self { num_markers, num_cameras, entries, by_camera }
    }
}

/// Camera poses and marker positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationState {
    pub poses: Vec<CameraPose>,
    pub markers: Vec<Vector3<f64>>,
}

impl CalibrationState {
    pub fn rotations(&self) -> Vec<Matrix3<f64>> {
        self.poses.iter().map(CameraPose::rotation).collect()
    }

    pub fn camera_centers(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(camera_center).collect()
    }

    /// Largest absolute structural coordinate (translations and markers).
    pub fn max_abs_coordinate(&self) -> f64 {
        self.poses
            .iter()
            .map(|p| &p.translation)
            .chain(&self.markers)
            .flat_map(|v| v.iter().copied())
            .fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.poses.iter().all(CameraPose::is_finite)
            && self.markers.iter().all(|x| x.iter().all(|v| v.is_finite()))
    }

    /// Checks the state against the shape of `obs`.
    pub fn check_shape(&self, obs: &ObservationSet) -> Result<()> {
        if self.poses.len() != obs.num_cameras() || self.markers.len() != obs.num_markers() {
            return Err(CalibError::InvalidArgument(format!(
                "state has {} cameras and {} markers, observations have {} and {}",
                self.poses.len(),
                self.markers.len(),
                obs.num_cameras(),
                obs.num_markers()
            )));
        }
        if !self.is_finite() {
            return Err(CalibError::InvalidArgument("state contains non-finite values".into()));
        }
        Ok(())
    }
}
