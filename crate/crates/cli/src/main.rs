//! `rpf`: train, evaluate, replay and plot multi-robot potential-field runs.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Multi-robot motion planning with a learned potential field.
#[derive(Debug, Parser)]
#[command(name = "rpf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by `train` and `eval`. Precedence: `--set` and
/// dedicated flags, then `--config`, then built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON settings file (any subset of the settings tree).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set ppo.gamma=0.99` or `--set world.d_r=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Planner: rpf, vanilla_apf or vanilla_ppo.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory; created if missing.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a shared policy and write checkpoints plus a per-episode log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training arena: mixed, cluttered, cluttered-small, circle<N> or circle<N>-r<R>.
        #[arg(long, default_value = "mixed")]
        scenario: String,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run episodes and write a metrics report and trajectory exports.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Scenario name (circle8-r3, cluttered, local-minimum, ...) or a scenario JSON file.
        #[arg(long)]
        scenario: String,
        /// Policy checkpoint, required by the learned modes.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// One episode per seed; comma-separated or repeated.
        #[arg(long = "seed", value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Re-run the command recorded in an output directory and check that
    /// every artifact comes out byte-identical.
    Replay {
        /// Directory holding a manifest.json.
        run_dir: PathBuf,
    },
    /// Render trajectories or compare metric reports as SVG.
    Plot {
        /// Trajectory CSV to draw.
        #[arg(long, conflicts_with = "report")]
        trajectory: Option<PathBuf>,
        /// Scenario JSON providing obstacles and goals for the trajectory plot.
        #[arg(long, requires = "trajectory")]
        scenario: Option<PathBuf>,
        /// Metric reports to compare; one bar group per report.
        #[arg(long, num_args = 1..)]
        report: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure classes mapped onto the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, settings or inputs (exit 2).
    Config(anyhow::Error),
    /// The run itself failed (exit 3).
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Tags errors with their failure class.
pub trait Classify<T> {
    fn config(self) -> CmdResult<T>;
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// Parses `args` (without the program name) and runs the command.
pub fn dispatch(args: Vec<String>) -> CmdResult {
    let cli = Cli::try_parse_from(std::iter::once("rpf".to_string()).chain(args.iter().cloned())).config()?;
    match cli.command {
        Command::Train {
            common,
            scenario,
            episodes,
            seed,
        } => commands::train(&common, &scenario, episodes, seed, &args),
        Command::Eval {
            common,
            scenario,
            checkpoint,
            seeds,
        } => commands::eval(&common, &scenario, checkpoint.as_deref(), &seeds, &args),
        Command::Replay { run_dir } => commands::replay(&run_dir),
        Command::Plot {
            trajectory,
            scenario,
            report,
            out,
        } => match trajectory {
            Some(t) => plot::trajectory(&t, scenario.as_deref(), &out),
            None => plot::reports(&report, &out),
        },
    }
}

fn main() -> ExitCode {
    // let clap print help, version and usage errors itself
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Err(e) = Cli::try_parse() {
        e.exit();
    }
    match dispatch(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
