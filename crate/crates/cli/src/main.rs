use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wandcal_cli::commands::{self, InitSource, METRICS_FILE};
use wandcal_cli::io::{read_config, read_json, write_text, RunConfig};
use wandcal_cli::{exit, CliError};
use wandcal_core::simulator::SceneSpec;

#[derive(Parser)]
#[command(name = "wandcal", version, about = "Multi-camera extrinsic calibration from a two-marker wand")]
struct Cli {
    /// JSON configuration: a scene spec for `simulate`, a run config for
    /// `calibrate`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Refine an initial state against a dataset.
    Calibrate(CalibrateArgs),
    /// Compare a results file with ground truth.
    Evaluate(EvaluateArgs),
    /// Check the LP solver against brute-force vertex enumeration.
    LpSelftest(SelftestArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of cameras.
    #[arg(long)]
    cameras: Option<usize>,
    /// Number of wand frames (two markers each).
    #[arg(long)]
    frames: Option<usize>,
    /// Pixel noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    /// Probability of dropping a visible observation.
    #[arg(long)]
    dropout: Option<f64>,
    /// Wand length in meters.
    #[arg(long)]
    wand_length: Option<f64>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Dataset written by `simulate` or in the same format.
    dataset: PathBuf,
    /// Initial state file.
    #[arg(long, conflicts_with = "perturb_truth")]
    init: Option<PathBuf>,
    /// Start from the dataset's ground truth plus random perturbations.
    #[arg(long)]
    perturb_truth: bool,
    /// Markers held below the cameras [default: 200].
    #[arg(long)]
    m_cal: Option<usize>,
    /// Half-width of the coordinate box in meters [default: 10].
    #[arg(long)]
    bound: Option<f64>,
    /// Outer iteration limit.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative decrease that ends the iteration.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Results file written by `calibrate`.
    results: PathBuf,
    /// Ground-truth state file.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Dataset for the reprojection error; also supplies ground truth.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Number of random problems.
    #[arg(long, default_value_t = 200)]
    count: usize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Simulate(a) => {
            let mut spec: SceneSpec = match &cli.config {
                Some(p) => read_json(p)?,
                None => SceneSpec::default(),
            };
            if let Some(v) = a.cameras {
                spec.cameras = v;
            }
            if let Some(v) = a.frames {
                spec.frames = v;
            }
            if let Some(v) = a.noise {
                spec.noise_sigma = v;
            }
            if let Some(v) = a.dropout {
                spec.dropout = v;
            }
            if let Some(v) = a.wand_length {
                spec.wand_length = v;
            }
            if let Some(v) = cli.seed {
                spec.seed = v;
            }
            let s = commands::simulate(&spec, &out)?;
            println!(
                "{} cameras, {} markers, {} observations, mask density {:.3}",
                s.cameras, s.markers, s.observations, s.mask_density
            );
            println!("wrote {} and {}", s.dataset.display(), s.truth.display());
        }
        Command::Calibrate(a) => {
            let mut cfg: RunConfig = match &cli.config {
                Some(p) => read_config(p)?,
                None => RunConfig::default(),
            };
            if let Some(v) = cli.seed {
                cfg.seed = v;
            }
            if let Some(v) = a.m_cal {
                cfg.refine.subproblem.m_cal = v;
            }
            if let Some(v) = a.bound {
                cfg.refine.subproblem.bound = v;
            }
            if let Some(v) = a.max_iters {
                cfg.refine.max_iterations = v;
            }
            if let Some(v) = a.tol {
                cfg.refine.tolerance = v;
            }
            let init = match (a.init, a.perturb_truth) {
                (Some(p), _) => Some(InitSource::File(p)),
                (None, true) => Some(InitSource::PerturbedTruth),
                (None, false) => None,
            };
            let o = commands::calibrate(&a.dataset, &cfg, init.as_ref(), &out)?;
            let r = &o.results.report;
            println!("{} after {} iterations", r.termination.describe(), r.iterations.len());
            match r.final_reprojection_rms {
                Some(v) => println!("reprojection RMS {v:.3e} px"),
                None => println!("reprojection RMS unavailable (a marker lies behind a camera)"),
            }
            println!("wrote {} and {}", o.results_path.display(), o.iterations_path.display());
        }
        Command::Evaluate(a) => {
            let m = commands::evaluate(&a.results, a.truth.as_deref(), a.dataset.as_deref())?;
            print!("{}", m.to_table());
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                write_text(&dir.join(METRICS_FILE), &m.to_csv())?;
            }
        }
        Command::LpSelftest(a) => {
            let r = commands::lp_selftest(a.count, cli.seed.unwrap_or(0));
            println!(
                "{} problems ({} infeasible): status mismatches {}, max objective error {:.3e}, max violation {:.3e}",
                r.problems, r.infeasible, r.status_mismatches, r.max_objective_error, r.max_violation
            );
            if !r.passed(commands::SELFTEST_OBJECTIVE_TOL, commands::SELFTEST_FEASIBILITY_TOL) {
                return Err(CliError::Numerical("LP self-test failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::BAD_INPUT } else { exit::SUCCESS });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
