//! Command-line arguments. Every subcommand's arguments double as its serializable run config.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "rqc",
    about = "Random quantum circuits: generate, simulate, estimate fidelity, model cost"
)]
pub struct Cli {
    /// Worker threads for parallel kernels.
    #[arg(long, global = true, env = "RQC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate a random circuit as JSON.
    Generate(GenerateArgs),
    /// Compute amplitudes or draw samples with the state-vector or SFA engine.
    Simulate(SimulateArgs),
    /// Estimate fidelity from samples and verify output statistics.
    Xeb(XebArgs),
    /// Tabulate runtime and memory estimates over an (n, m) grid.
    Cost(CostArgs),
    /// Re-run the configuration embedded in a report, sidecar or config file.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Full,
    Elided,
    Patch,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "ABCDCDAB")]
    pub sequence: String,
    /// `sycamore53`, `rectRxC` or a layout JSON path.
    #[arg(long, default_value = "sycamore53")]
    pub layout: String,
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    pub variant: VariantArg,
    /// Cross gates to elide (elided variant).
    #[arg(long)]
    pub k: Option<usize>,
    /// `default` or a comma-separated partition A.
    #[arg(long)]
    pub cut: Option<String>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineArg {
    Sv,
    Sfa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Amplitudes,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionArg {
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderArg {
    Index,
    Weight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    Text,
    Binary,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub circuit: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineArg::Sv)]
    pub engine: EngineArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Amplitudes)]
    pub mode: ModeArg,
    /// Bitstrings to evaluate (amplitudes mode); all 2^n when neither this nor --count is given.
    #[arg(long)]
    pub bitstrings: Option<PathBuf>,
    /// Random bitstrings (amplitudes mode) or number of samples (sample mode).
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Double)]
    pub precision: PrecisionArg,
    /// Depolarizing fidelity applied to state-vector samples.
    #[arg(long)]
    pub fidelity: Option<f64>,
    /// Fraction of Schmidt paths summed (SFA).
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    /// Branch points fixed per checkpointed prefix (SFA).
    #[arg(long)]
    pub prefix: Option<usize>,
    #[arg(long, value_enum, default_value_t = OrderArg::Index)]
    pub order: OrderArg,
    /// Keep wedge pairs as separate cross gates (SFA).
    #[arg(long)]
    pub no_fuse: bool,
    /// `default` or a comma-separated partition A (SFA).
    #[arg(long)]
    pub cut: Option<String>,
    /// Layout override; defaults to the circuit's layout id.
    #[arg(long)]
    pub layout: Option<String>,
    /// Rejection-sampling ceiling as a multiple of 1/D (SFA sample mode).
    #[arg(long, default_value_t = 10.0)]
    pub ceiling: f64,
    #[arg(long, value_enum, default_value_t = SampleFormat::Text)]
    pub format: SampleFormat,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Linear,
    Log,
    Hog,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct XebArgs {
    #[arg(long)]
    pub circuit: Option<PathBuf>,
    /// Sample file; binary when --sample-format binary or the extension is `.bin`.
    #[arg(long, requires = "circuit")]
    pub samples: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sample_format: Option<SampleFormat>,
    /// NDJSON rows of (circuit_id, bitstring, p_s), instead of circuit and samples.
    #[arg(long, conflicts_with_all = ["circuit", "samples"])]
    pub probs: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "linear,log,hog")]
    pub estimators: Vec<EstimatorArg>,
    /// Bootstrap resamples for the linear estimate.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Directory for histogram CSVs with theory overlays.
    #[arg(long)]
    pub plots: Option<PathBuf>,
    /// Probability table (one comma-separated distribution per line) for speckle purity.
    #[arg(long)]
    pub purity: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Double)]
    pub precision: PrecisionArg,
    /// Report path; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CostArgs {
    /// Qubit counts: `a..b` (inclusive) or a comma list.
    #[arg(long, default_value = "20..53")]
    pub n: String,
    /// Cycle counts: `a..b` (inclusive) or a comma list.
    #[arg(long, default_value = "12..20")]
    pub m: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub cores: u64,
    #[arg(long, value_enum, default_value_t = TableFormat::Json)]
    pub format: TableFormat,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub config: PathBuf,
}

/// Full description of a run; embedded in every report and sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub threads: Option<usize>,
    #[serde(flatten)]
    pub command: Command,
}
