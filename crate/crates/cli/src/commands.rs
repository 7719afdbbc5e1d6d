use std::path::{Path, PathBuf};

use log::{info, warn};
use wandcal_core::evaluate::{evaluate as evaluate_state, EvaluationMetrics};
use wandcal_core::observations::CalibrationState;
use wandcal_core::refine::{refine, Termination};
use wandcal_core::simulator::{generate_scene, perturb_state, SceneSpec};
use wandcal_lp::selftest::{self, SelftestReport};

use crate::io::{
    read_dataset, read_results, read_state, to_json, write_text, DatasetFile, ResultsFile, RunConfig, StateFile,
    FORMAT_VERSION,
};
use crate::CliError;

pub const DATASET_FILE: &str = "dataset.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const RESULTS_FILE: &str = "results.json";
pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const METRICS_FILE: &str = "metrics.csv";

/// Objective and feasibility tolerances of the solver self-test.
pub const SELFTEST_OBJECTIVE_TOL: f64 = 1e-8;
pub const SELFTEST_FEASIBILITY_TOL: f64 = 1e-7;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub cameras: usize,
    pub markers: usize,
    pub observations: usize,
    /// Fraction of marker-camera pairs that are observed.
    pub mask_density: f64,
    pub dataset: PathBuf,
    pub truth: PathBuf,
}

/// Writes a synthetic dataset (with its ground truth embedded) and a
/// separate truth state file into `out`.
pub fn simulate(spec: &SceneSpec, out: &Path) -> Result<SimulateSummary, CliError> {
    spec.validate().map_err(|e| CliError::BadInput(e.to_string()))?;
    let scene = generate_scene(spec)?;
    ensure_dir(out)?;
    let dataset = out.join(DATASET_FILE);
    let truth = out.join(TRUTH_FILE);
    write_text(&dataset, &to_json(&DatasetFile::from_scene(&scene)))?;
    write_text(&truth, &to_json(&StateFile { format_version: FORMAT_VERSION, state: scene.truth.state.clone() }))?;
    let obs = &scene.observations;
    let k = obs.observations().len();
    Ok(SimulateSummary {
        cameras: obs.num_cameras(),
        markers: obs.num_markers(),
        observations: k,
        mask_density: k as f64 / (obs.num_markers() * obs.num_cameras()) as f64,
        dataset,
        truth,
    })
}

/// Where the initial state comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSource {
    File(PathBuf),
    /// Ground truth from the dataset, perturbed with the configured
    /// magnitudes and seed.
    PerturbedTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateOutcome {
    pub results: ResultsFile,
    pub results_path: PathBuf,
    pub iterations_path: PathBuf,
}

pub fn initial_state(
    init: Option<&InitSource>,
    truth: Option<&CalibrationState>,
    cfg: &RunConfig,
) -> Result<CalibrationState, CliError> {
    match init {
        Some(InitSource::File(p)) => read_state(p),
        Some(InitSource::PerturbedTruth) => {
            let truth = truth.ok_or_else(|| {
                CliError::BadInput("the dataset has no ground_truth block to perturb; pass --init instead".into())
            })?;
            Ok(perturb_state(truth, &cfg.perturbation, cfg.seed, cfg.refine.subproblem.bound)?)
        }
        None => Err(CliError::BadInput(
            "no initial state: automatic initialization is not provided, so supply --init <state.json> \
             or --perturb-truth for a dataset with ground truth"
                .into(),
        )),
    }
}

/// Refines the dataset and writes the results and per-iteration table.
///
/// A run that is rolled back on its first iteration made no progress and
/// is reported as a numerical failure after the files are written.
pub fn calibrate(
    dataset: &Path,
    cfg: &RunConfig,
    init: Option<&InitSource>,
    out: &Path,
) -> Result<CalibrateOutcome, CliError> {
    let ds = read_dataset(dataset)?;
    cfg.refine.validate()?;
    let start = initial_state(init, ds.ground_truth.as_ref(), cfg)?;
    start.check_shape(&ds.observations)?;
    let (state, report) = refine(&start, &ds.observations, &ds.intrinsics, &cfg.refine)?;
    info!(
        "{} iterations, {}; reprojection RMS {:?} px",
        report.iterations.len(),
        report.termination.describe(),
        report.final_reprojection_rms
    );
    ensure_dir(out)?;
    let results_path = out.join(RESULTS_FILE);
    let iterations_path = out.join(ITERATIONS_FILE);
    write_text(&iterations_path, &report.to_csv())?;
    let results = ResultsFile { format_version: FORMAT_VERSION, state, report };
    write_text(&results_path, &to_json(&results))?;

    if results.report.termination == Termination::LaeLseDivergence {
        if !results.report.iterations.iter().any(|r| r.accepted) {
            return Err(CliError::Numerical(format!(
                "the first subproblem step did not lower the squared objective; initial state kept in {}",
                results_path.display()
            )));
        }
        warn!("stopped when a subproblem step no longer lowered the squared objective");
    }
    Ok(CalibrateOutcome { results, results_path, iterations_path })
}

/// Compares a results file with ground truth taken from `truth` or, failing
/// that, from the dataset. The dataset also enables the reprojection RMS.
pub fn evaluate(
    results: &Path,
    truth: Option<&Path>,
    dataset: Option<&Path>,
) -> Result<EvaluationMetrics, CliError> {
    let res = read_results(results)?;
    let ds = dataset.map(read_dataset).transpose()?;
    let reference = match (truth, &ds) {
        (Some(p), _) => read_state(p)?,
        (None, Some(d)) => d.ground_truth.clone().ok_or_else(|| {
            CliError::BadInput("the dataset has no ground_truth block; pass --truth".into())
        })?,
        (None, None) => return Err(CliError::BadInput("evaluate needs --truth or --dataset".into())),
    };
    if res.state.poses.len() != reference.poses.len() {
        return Err(CliError::BadInput(format!(
            "results have {} cameras but the truth has {}",
            res.state.poses.len(),
            reference.poses.len()
        )));
    }
    let data = ds.as_ref().map(|d| (&d.observations, d.intrinsics.as_slice()));
    Ok(evaluate_state(&res.state, &reference, data)?)
}

pub fn lp_selftest(count: usize, seed: u64) -> SelftestReport {
    selftest::run(count, seed)
}
