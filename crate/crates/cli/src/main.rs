//! `hypersr`: simulate inputs, train, predict, evaluate, unmix and verify.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "hypersr", version, about = "Spectral super-resolution from RGB and linear unmixing")]
struct Cli {
    /// Worker threads for parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Every subcommand. The serialized form is the resolved-config snapshot
/// written next to a command's outputs; `replay` runs it again.
#[derive(Subcommand, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Integrate every cube in a directory against spectral response curves.
    Simulate(SimulateArgs),
    /// Multiply or divide a cube by a per-band illumination spectrum.
    Illuminate(IlluminateArgs),
    /// Convert between the native cube format (.json) and ENVI (.hdr).
    Convert(ConvertArgs),
    /// Train a network from a run configuration file.
    Train(TrainArgs),
    /// Predict a full-resolution cube from an input image.
    Predict(PredictArgs),
    /// Compare predicted cubes against ground truth.
    Evaluate(EvaluateArgs),
    /// Extract endmembers (VCA) and abundance maps (FCLS).
    Unmix(UnmixArgs),
    /// Run the numerical self-checks.
    Verify(VerifyArgs),
    /// Re-run a command from its resolved-config snapshot.
    #[serde(skip)]
    Replay {
        snapshot: PathBuf,
    },
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Directory of ground-truth cubes (`<id>.json`).
    #[arg(long)]
    pub cubes: PathBuf,
    /// Response curves CSV, or `cie1964` for the bundled observer.
    #[arg(long, default_value = "cie1964")]
    pub srf: String,
    /// Output directory for `<id>.json` input images.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum IllumMode {
    Multiply,
    Divide,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IlluminateArgs {
    #[arg(long)]
    pub cube: PathBuf,
    /// `wavelength_nm,value` CSV on the cube's wavelength grid.
    #[arg(long)]
    pub illumination: PathBuf,
    #[arg(long, value_enum)]
    pub mode: IllumMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConvertArgs {
    /// Source cube, `.json` or `.hdr`.
    pub from: PathBuf,
    /// Destination cube, `.json` or `.hdr`.
    pub to: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input image (`.json` cube).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub tile: usize,
    #[arg(long, default_value_t = 8)]
    pub overlap: usize,
    /// Take output wavelengths from this cube instead of the checkpoint's
    /// `wavelengths.txt`.
    #[arg(long)]
    pub wavelengths_from: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Also write the table to this CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UnmixArgs {
    #[arg(long)]
    pub cube: PathBuf,
    /// Number of endmembers.
    #[arg(short, long, default_value_t = 15)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Denoise by projection onto this many principal components first.
    #[arg(long)]
    pub pca: Option<usize>,
    /// Output directory for `endmembers.csv` and `abundances.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run only these checks.
    #[arg(long = "check")]
    pub checks: Vec<String>,
    /// Also write the report to this CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

/// How a command finished when it did not error.
pub enum Outcome {
    Ok,
    ChecksFailed,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use hypersr::error::Error;
    match err.downcast_ref::<Error>() {
        Some(
            Error::Diverged { .. }
            | Error::Training { .. }
            | Error::Simulation { .. }
            | Error::Extraction(_)
            | Error::Metric(_),
        ) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
