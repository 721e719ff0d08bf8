//! `volfit` command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 generation failure, 4 numerical
//! failure. `OBSURF_THREADS` caps the worker count (unset or 0 = automatic).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "volfit", version, about = "Poisson-process volume rendering, scene generation and fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a scene file to color, depth, mask and per-component images.
    Render(RenderArgs),
    /// Generate a synthetic RGB-D dataset.
    Generate(GenerateArgs),
    /// Fit a scene's parameters to a generated RGB-D scene directory.
    Fit(FitArgs),
    /// Estimator bias demonstration on a thin dense slab.
    BiasDemo(BiasDemoArgs),
    /// Score predicted images against ground truth.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Scene document (JSON).
    pub scene: PathBuf,
    /// Render only this view index.
    #[arg(long, conflicts_with = "rig")]
    pub view: Option<usize>,
    /// Render every view of the scene.
    #[arg(long)]
    pub rig: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scene's quadrature seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub coarse: Option<usize>,
    #[arg(long)]
    pub fine: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Generator configuration (JSON); defaults are used when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Scene directory holding scene.json and its views.
    #[arg(long)]
    pub data: PathBuf,
    /// Initial scene document; defaults to the ground truth.
    #[arg(long, conflicts_with = "init_random")]
    pub init: Option<PathBuf>,
    /// Redraw object centers and colors at random.
    #[arg(long)]
    pub init_random: bool,
    /// Move each initial object center this far horizontally.
    #[arg(long, default_value_t = 0.0)]
    pub perturb_center: f64,
    /// Move each initial color channel this far towards 0.5.
    #[arg(long, default_value_t = 0.0)]
    pub perturb_color: f64,
    #[arg(long, default_value_t = 2000)]
    pub iters: u64,
    #[arg(long, default_value_t = 4e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    /// Final overlap weight; 0 disables the overlap loss.
    #[arg(long, default_value_t = 0.05)]
    pub k_o_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also optimise the background component.
    #[arg(long)]
    pub fit_background: bool,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Fitted scene document; defaults to the report path with `.scene.json`.
    #[arg(long)]
    pub scene_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BiasDemoArgs {
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add a fine pass of 2k samples drawn from the coarse weights.
    #[arg(long)]
    pub hierarchical: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn configure_threads() -> Result<(), CliError> {
    let threads = match std::env::var("OBSURF_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("OBSURF_THREADS must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Render(a) => commands::render(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::BiasDemo(a) => commands::bias_demo(&a),
        Command::Eval(a) => commands::eval(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
