//! JSON file formats.
//!
//! Every document carries `format_version` and rejects unknown keys. Floats
//! are written in the shortest form that parses back to the same value, so
//! write-then-read is the identity.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wandcal_core::geometry::CameraIntrinsics;
use wandcal_core::observations::{CalibrationState, Observation, ObservationSet};
use wandcal_core::refine::{RefineConfig, RefineReport};
use wandcal_core::simulator::{PerturbationMagnitudes, Scene};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

/// How markers are grouped into wand frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WandPairing {
    /// Markers `2k` and `2k + 1` belong to frame `k`.
    Consecutive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub marker_index: usize,
    pub camera_index: usize,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub format_version: u32,
    /// Physical wand length in meters.
    pub wand_length: f64,
    pub num_markers: usize,
    pub wand_pairing: WandPairing,
    /// One entry per camera.
    pub intrinsics: Vec<CameraIntrinsics>,
    pub observations: Vec<ObservationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<CalibrationState>,
}

/// A validated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: ObservationSet,
    pub intrinsics: Vec<CameraIntrinsics>,
    pub ground_truth: Option<CalibrationState>,
}

impl DatasetFile {
    pub fn from_scene(scene: &Scene) -> Self {
        Self::from_parts(&scene.observations, &scene.truth.intrinsics, Some(&scene.truth.state))
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        Self::from_parts(&d.observations, &d.intrinsics, d.ground_truth.as_ref())
    }

    fn from_parts(
        obs: &ObservationSet,
        intrinsics: &[CameraIntrinsics],
        ground_truth: Option<&CalibrationState>,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            wand_length: obs.wand_length(),
            num_markers: obs.num_markers(),
            wand_pairing: WandPairing::Consecutive,
            intrinsics: intrinsics.to_vec(),
            observations: obs
                .observations()
                .iter()
                .map(|o| ObservationRecord { marker_index: o.marker, camera_index: o.camera, u: o.u, v: o.v })
                .collect(),
            ground_truth: ground_truth.cloned(),
        }
    }

    pub fn validate(self) -> Result<Dataset, CliError> {
        check_version(self.format_version)?;
        for (n, k) in self.intrinsics.iter().enumerate() {
            k.validate().map_err(|e| CliError::BadInput(format!("intrinsics[{n}]: {e}")))?;
        }
        let observations = ObservationSet::new(
            self.num_markers,
            self.intrinsics.len(),
            self.wand_length,
            self.observations
                .iter()
                .map(|o| Observation { marker: o.marker_index, camera: o.camera_index, u: o.u, v: o.v })
                .collect(),
        )?;
        if let Some(truth) = &self.ground_truth {
            truth
                .check_shape(&observations)
                .map_err(|e| CliError::BadInput(format!("ground_truth: {e}")))?;
        }
        Ok(Dataset { observations, intrinsics: self.intrinsics, ground_truth: self.ground_truth })
    }
}

/// Camera poses and markers on their own, used for truth and initial
/// states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub format_version: u32,
    pub state: CalibrationState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub format_version: u32,
    pub state: CalibrationState,
    pub report: RefineReport,
}

fn default_perturbation() -> PerturbationMagnitudes {
    PerturbationMagnitudes::standard()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub refine: RefineConfig,
    /// Used when the initial state is drawn around the dataset's truth.
    #[serde(default = "default_perturbation")]
    pub perturbation: PerturbationMagnitudes,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 0, refine: RefineConfig::default(), perturbation: default_perturbation() }
    }
}

pub fn check_version(v: u32) -> Result<(), CliError> {
    if v != FORMAT_VERSION {
        return Err(CliError::BadInput(format!("unsupported format_version {v}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

/// Parses `text`, reporting the JSON path of the first offending value.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Schema { file: origin.to_string(), path, message: e.into_inner().to_string() }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    parse_json(&read_text(path)?, &path.display().to_string())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("file types serialize");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn parse_dataset(text: &str, origin: &str) -> Result<Dataset, CliError> {
    parse_json::<DatasetFile>(text, origin)?.validate()
}

pub fn parse_state(text: &str, origin: &str) -> Result<CalibrationState, CliError> {
    let f: StateFile = parse_json(text, origin)?;
    check_version(f.format_version)?;
    if !f.state.is_finite() {
        return Err(CliError::BadInput(format!("{origin}: state contains non-finite values")));
    }
    Ok(f.state)
}

pub fn parse_results(text: &str, origin: &str) -> Result<ResultsFile, CliError> {
    let f: ResultsFile = parse_json(text, origin)?;
    check_version(f.format_version)?;
    if !f.state.is_finite() {
        return Err(CliError::BadInput(format!("{origin}: state contains non-finite values")));
    }
    Ok(f)
}

/// Parses a run configuration and checks its refine settings.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = parse_json(text, origin)?;
    cfg.refine.validate()?;
    Ok(cfg)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    parse_dataset(&read_text(path)?, &path.display().to_string())
}

pub fn read_state(path: &Path) -> Result<CalibrationState, CliError> {
    parse_state(&read_text(path)?, &path.display().to_string())
}

pub fn read_results(path: &Path) -> Result<ResultsFile, CliError> {
    parse_results(&read_text(path)?, &path.display().to_string())
}

pub fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    parse_config(&read_text(path)?, &path.display().to_string())
}
