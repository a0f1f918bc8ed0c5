//! `myotrack` command-line entry point.

mod analyze;
mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use myotrack::Error;

#[derive(Debug, Parser)]
#[command(name = "myotrack", version, about = "Muscle-driven motion imitation: retargeting, training, evaluation and analysis")]
pub struct Cli {
    /// Seed overriding the configured one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Model file checks.
    #[command(subcommand)]
    Model(ModelCmd),
    /// Marker trajectory to reference trajectory.
    Retarget(RetargetArgs),
    /// Train a policy from an experiment config.
    Train(TrainArgs),
    /// Evaluate a trained policy or a scripted controller over the full reference.
    Eval(EvalArgs),
    /// Environment throughput under random excitations.
    Bench(BenchArgs),
    /// Analyses over rollout logs.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
}

#[derive(Debug, Subcommand)]
pub enum ModelCmd {
    /// Checks invariants, mass-matrix symmetry and moment arms at random poses.
    Validate {
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
}

#[derive(Debug, Args)]
pub struct RetargetArgs {
    /// Marker CSV (time, <name>_x, <name>_z, ...).
    pub markers: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Number of cycles to concatenate.
    #[arg(long, default_value_t = 1)]
    pub cycles: usize,
    /// Cross-fade window at each cycle seam, seconds.
    #[arg(long, default_value_t = 0.1)]
    pub blend: f64,
    /// Mark the output cyclic.
    #[arg(long)]
    pub cyclic: bool,
    /// Low-pass cutoff, Hz.
    #[arg(long, default_value_t = 20.0)]
    pub cutoff: f64,
    /// Temporal regularization weight of the IK objective.
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub config: PathBuf,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Replace existing results in the output directory.
    #[arg(long)]
    pub overwrite: bool,
    /// Flow exploration; `off` gives the Gaussian baseline.
    #[arg(long, value_enum)]
    pub flow: Option<OnOff>,
    /// Override the env-step budget.
    #[arg(long)]
    pub total_steps: Option<u64>,
    /// Stop (with a checkpoint) after this many iterations in this invocation.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerKind {
    Policy,
    Oracle,
    Teleport,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Training output directory (holds config.toml and checkpoint/).
    pub run: PathBuf,
    /// Experiment config; defaults to the run's config snapshot.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint directory; defaults to the run's latest.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, value_enum, default_value_t = ControllerKind::Policy)]
    pub controller: ControllerKind,
    /// Accept a checkpoint recorded under a different config.
    #[arg(long)]
    pub allow_config_mismatch: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub model: PathBuf,
    /// Environment counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub envs: Vec<usize>,
    /// Measurement window per count, seconds.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCmd {
    /// Explained variance of flattened logs, one CSV per channel group.
    Pca {
        /// Log CSVs or directories containing them.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "muscle,joint,grf")]
        channels: Vec<String>,
    },
    /// Simulated against reference: Pearson per channel and cycle mean/std curves.
    Compare {
        log: PathBuf,
        /// Reference CSV with measured EMG to compare activations against.
        #[arg(long, requires = "model")]
        reference: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Cycle period for logs without ground contact, seconds.
        #[arg(long)]
        period: Option<f64>,
    },
    /// Gait cycles from vertical ground reaction.
    Gait {
        log: PathBuf,
        #[arg(long, default_value_t = 0)]
        foot: usize,
        /// Threshold as a fraction of body weight.
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        /// Sliding-window smoothing of the reaction force, seconds.
        #[arg(long, default_value_t = 0.1)]
        smooth: f64,
    },
}

/// Numerical breakdowns exit with 2; everything else the user can fix exits with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged { .. } | Error::NonFiniteGradient | Error::NonFiniteLoss(_) | Error::Sampling(_) => 2,
        Error::Ik { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).format_target(false).format_timestamp(None).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
