use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

use output::CliError;

#[derive(Parser)]
#[command(
    name = "lfpdecode",
    version,
    about = "Spectral LDA decoding of multichannel trials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset directory.
    Generate(GenerateArgs),
    /// Leave-one-out evaluation of one configuration.
    Evaluate(EvaluateArgs),
    /// Evaluate a grid of configurations.
    Sweep(SweepArgs),
    /// Convert sweep results into long-format plotting data.
    PlotData(PlotDataArgs),
    /// Print a dataset summary and the residual-noise diagnostic.
    Inspect(InspectArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Generator parameters (JSON); omitted fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override the number of EDCs.
    #[arg(long)]
    pub edcs: Option<usize>,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Write per-trial samples as CSV instead of little-endian f64.
    #[arg(long)]
    pub text: bool,
}

#[derive(Args, Clone)]
pub struct RunFlags {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory; overrides the config's `dataset`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use log power for the power-spectrum flavor.
    #[arg(long)]
    pub log_power: bool,
    /// Skip PCA/ZCA and feed raw features to LDA.
    #[arg(long)]
    pub no_whiten: bool,
    /// Output directory for result files.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Re-run the configuration and dataset recorded in a run manifest.
    #[arg(long, conflicts_with_all = ["config", "dataset", "seed", "log_power", "no_whiten"])]
    pub manifest: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Grid specification (JSON).
    #[arg(long, required_unless_present = "preset")]
    pub grid: Option<PathBuf>,
    /// Built-in grid: `window` (T = 100..1000, D = 0) or `delay` (T = 200, D = 0..800).
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Args)]
pub struct PlotDataArgs {
    /// `sweep.json` written by the sweep command.
    #[arg(long)]
    pub sweep: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Channel for the noise diagnostic.
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Frequencies kept by the truncation estimate.
    #[arg(long, default_value_t = 5)]
    pub frequencies: usize,
    /// EDC whose trials feed the diagnostic (default: the first).
    #[arg(long)]
    pub edc: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::PlotData(a) => commands::plot_data(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code)
        }
    }
}

impl From<lfpdecode_core::Error> for CliError {
    fn from(e: lfpdecode_core::Error) -> Self {
        let code = if e.is_usage() { 2 } else { 1 };
        CliError::new(code, e.kind(), e.to_string())
    }
}
