//! Command-line surface for the decorrelation toolkit. Every subcommand is a
//! thin shell around the library's experiment runners: parse flags, resolve
//! the seed, run, and emit CSV/JSON artifacts for external plotting.
//!
//! Exit codes: 0 success, 1 runtime or data failure, 2 usage error.

mod commands;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use commands::CmdError;

#[derive(Parser)]
#[command(
    name = "orthoreg",
    version,
    about = "Weight-decorrelation experiments: angle dynamics, decorrelation bounds, MNIST sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pure decorrelation dynamics of n unit vectors in 2D; writes a
    /// per-step trajectory CSV
    Toy2d(Toy2dArgs),
    /// Descend both losses from identical starts and compare the settled
    /// minimum pairwise angle; writes a JSON summary
    BoundCompare(BoundCompareArgs),
    /// Train MNIST MLPs, one arm per regularization strength; writes
    /// per-epoch CSVs and a JSON summary
    Mnist(MnistArgs),
    /// Train unregularized, global, and local arms from one initialization;
    /// writes per-epoch CSVs and a JSON summary
    ModeCompare(ModeCompareArgs),
    /// Print angle statistics of a stored weight matrix as JSON
    Analyze(AnalyzeArgs),
    /// Verify both regularizer gradients against central finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Global,
    Local,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Descent,
    Ascent,
}

#[derive(clap::Args)]
struct Toy2dArgs {
    /// Number of unit vectors
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(usize))]
    n: usize,
    /// Regularization steps (step 0 is also recorded)
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Local)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = DirectionArg::Descent)]
    direction: DirectionArg,
    /// Squashing sharpness of the local loss
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.03)]
    step_size: f64,
    /// Defaults to $ORTHOREG_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(clap::Args)]
struct BoundCompareArgs {
    /// Number of unit vectors (informative only when n > d)
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Ambient dimension
    #[arg(long, default_value_t = 32)]
    d: usize,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    step_size: f64,
    /// Number of repetitions; arm i uses seed --seed + i
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(clap::Args)]
struct MnistArgs {
    /// Directory holding train-images-idx3-ubyte, train-labels-idx1-ubyte,
    /// t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte
    #[arg(long)]
    data_dir: PathBuf,
    /// Regularization strength; repeat the flag for several arms
    #[arg(long = "gamma")]
    gamma: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Local)]
    mode: ModeArg,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(usize))]
    epochs: usize,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    batch: u64,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Width of each hidden layer
    #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u64).range(1..))]
    hidden: u64,
    /// Number of hidden layers
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    layers: u64,
    /// Bilinearly upsample images from 28x28 to 32x32 before training
    #[arg(long)]
    upsample32: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(clap::Args)]
struct ModeCompareArgs {
    #[arg(long)]
    data_dir: PathBuf,
    /// Strength used by both regularized arms
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(usize))]
    epochs: usize,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    batch: u64,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u64).range(1..))]
    hidden: u64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    layers: u64,
    #[arg(long)]
    upsample32: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    /// Weight file: header "rows cols", then one whitespace-separated row
    /// per line
    #[arg(long)]
    weights: PathBuf,
    /// Histogram bins over [0°, 180°]
    #[arg(long, default_value_t = 36, value_parser = clap::value_parser!(u64).range(1..))]
    bins: u64,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum acceptable relative error against central differences
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

fn main() -> ExitCode {
    // clap itself exits with 2 on unknown flags or invalid values
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Toy2d(args) => commands::toy2d(args),
        Command::BoundCompare(args) => commands::bound_compare(args),
        Command::Mnist(args) => commands::mnist(args),
        Command::ModeCompare(args) => commands::mode_compare(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Gradcheck(args) => commands::gradcheck(args),
    };
    match outcome {
        Ok(code) => code,
        Err(CmdError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CmdError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
