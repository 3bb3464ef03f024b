use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ge_sentinel::sim::{PRESET_ATTACKS, PRESET_ATTACK_TRACES, PRESET_STEP};

#[derive(Debug, Parser)]
#[command(
    name = "ge-sentinel",
    version,
    about = "Guessing-entropy early stopping for side-channel model training"
)]
pub struct Cli {
    /// Worker threads for GE computation (default: all cores).
    /// GE_SENTINEL_THREADS takes precedence.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time the optimized GE kernel against the nested-loop reference.
    Bench(BenchArgs),
    /// Write per-epoch attack sets from a leakage schedule.
    Simulate(SimulateArgs),
    /// Run the early-stopping monitor over a simulated training run.
    Monitor(MonitorArgs),
    /// Grid search that stops at the first point meeting the stop conditions.
    Gridsearch(GridsearchArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Attack-set directory (header.json, predictions.bin, plaintexts.bin).
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    pub attack: Option<PathBuf>,

    /// Benchmark on a simulated attack set instead.
    #[arg(long)]
    pub synthetic: bool,

    /// Traces in the synthetic attack set.
    #[arg(long, default_value_t = 5000)]
    pub traces: usize,

    #[arg(long, default_value_t = 256)]
    pub keyspace: usize,

    /// Signal strength of the synthetic predictions.
    #[arg(long, default_value_t = 0.4)]
    pub theta: f64,

    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,

    #[arg(long, default_value_t = 0x3c)]
    pub true_key: u8,

    /// Traces per GE curve (default: the whole attack set).
    #[arg(long)]
    pub max_traces: Option<usize>,

    #[arg(long, default_value_t = 100)]
    pub step: usize,

    /// Attack repetitions per curve.
    #[arg(long, default_value_t = 10)]
    pub attacks: usize,

    #[arg(long, default_value_t = 10)]
    pub trials: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory for bench.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetName {
    Ramp,
    Overfit,
    Flat,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Named schedule (default: ramp).
    #[arg(long, value_enum, conflicts_with = "schedule")]
    pub preset: Option<PresetName>,

    /// Schedule JSON: {"n_epochs", "signal", "noise_sigma", "seed"}.
    #[arg(long)]
    pub schedule: Option<PathBuf>,

    /// Peak (or flat) signal strength of a preset.
    #[arg(long)]
    pub theta: Option<f64>,

    /// Epoch count of a preset, or how many epochs of a schedule file to use.
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Noise scale of a preset.
    #[arg(long)]
    pub noise: Option<f64>,

    /// Traces per epoch's attack set.
    #[arg(long, default_value_t = PRESET_ATTACK_TRACES)]
    pub traces: usize,

    #[arg(long, default_value_t = 256)]
    pub keyspace: usize,

    #[arg(long, default_value_t = 0x3c)]
    pub true_key: u8,

    /// Root seed; a schedule file keeps its own seed unless this is given.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,

    /// Output directory, one subdirectory per epoch.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    Soft,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Binary,
}

#[derive(Debug, Args)]
pub struct StopArgs {
    /// Traces per GE curve (default: N_a of the presets, capped by --traces).
    #[arg(long)]
    pub max_traces: Option<usize>,

    /// Upper trace bound of the area of hit (default: --max-traces).
    #[arg(long)]
    pub n_a: Option<usize>,

    #[arg(long, default_value_t = PRESET_STEP)]
    pub step: usize,

    /// Highest acceptable GE value.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub w: f64,

    /// Fixed lower trace bound (greedy case).
    #[arg(long)]
    pub v: Option<usize>,

    #[arg(long = "case", value_enum, default_value_t = CaseArg::Soft)]
    pub case: CaseArg,

    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    pub mode: ModeArg,

    /// Fraction of checkpoints that must stay inside in binary mode.
    #[arg(long, default_value_t = 0.95)]
    pub fraction: f64,

    #[arg(long, default_value_t = 3)]
    pub patience: usize,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,

    #[command(flatten)]
    pub stop: StopArgs,

    /// Attack repetitions per GE curve.
    #[arg(long, default_value_t = PRESET_ATTACKS)]
    pub attacks: usize,

    /// Run directory.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridsearchArgs {
    /// Hyperparameter space JSON: {"axes": [{"name", "values"}, ...]}.
    #[arg(long)]
    pub space: PathBuf,

    #[command(flatten)]
    pub schedule: ScheduleArgs,

    #[command(flatten)]
    pub stop: StopArgs,

    /// Attack repetitions per GE curve; a comma list gives one value per repeat.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub attacks: Vec<usize>,

    /// Independent searches, each with its own derived seed.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,

    #[arg(long, default_value = "search")]
    pub out: PathBuf,
}
