use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mscan", version, about = "Multiscale likelihood-ratio scanning of gridded data")]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the Gaussian surrogate and store its sample as a quantile table.
    Calibrate(CalibrateArgs),
    /// Scan a grid and report significant regions.
    Scan(ScanArgs),
    /// Monte-Carlo power study over block sizes, signal levels, v and alpha.
    Power(PowerArgs),
    /// Simulate null samples for several n or r_n and compare them.
    SimulateNull(SimulateNullArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Gaussian,
    Bernoulli,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemName {
    Cubes,
    Rects,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Bin,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeName {
    All,
    LocalMaxima,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Statistic {
    /// Gaussian surrogate M_n
    M,
    /// Scan statistic T_n on null data from --model
    T,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub model: ModelName,
    /// Gaussian standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Baseline on the mean scale (default 0, 0.5 or 1 by family).
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    #[arg(long, value_enum, default_value = "cubes")]
    pub system: SystemName,
    /// all, dyadic, or list:AxB,... (bare sides mean cubes).
    #[arg(long, default_value = "all")]
    pub scales: String,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[command(flatten)]
    pub system: SystemArgs,
    /// Lower scale bound r_n (default 2^d).
    #[arg(long)]
    pub rn: Option<usize>,
    /// auto or a number.
    #[arg(long, default_value = "auto")]
    pub v: String,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap on n^d times the replicate count.
    #[arg(long)]
    pub budget: Option<u128>,
    #[arg(long, value_enum, default_value = "bin")]
    pub format: TableFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    /// Grid file (binary or CSV).
    pub grid: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub rn: Option<usize>,
    #[arg(long, default_value = "auto")]
    pub v: String,
    /// Quantile table; simulated from --reps and --seed when absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "all")]
    pub mode: ModeName,
    /// Accept a table simulated for a different configuration.
    #[arg(long)]
    pub allow_mismatch: bool,
    /// Exit with status 2 when something is detected.
    #[arg(long)]
    pub exit_status: bool,
    /// Report path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PowerArgs {
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub rn: Option<usize>,
    /// Comma-separated penalty constants (auto or numbers).
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    pub v: Vec<String>,
    /// Comma-separated block sides.
    #[arg(long, value_delimiter = ',', default_value = "6,7")]
    pub blocks: Vec<usize>,
    /// Comma-separated anomaly means (mean scale).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,1.2")]
    pub theta1: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Replicates for the calibration tables.
    #[arg(long, default_value_t = 10_000)]
    pub cal_reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateNullArgs {
    #[arg(long, value_enum, default_value = "m")]
    pub statistic: Statistic,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub d: usize,
    /// Comma-separated side lengths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Comma-separated lower scale bounds (default 2^d).
    #[arg(long, value_delimiter = ',')]
    pub rn: Vec<usize>,
    #[arg(long, default_value = "auto")]
    pub v: String,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub budget: Option<u128>,
    #[arg(long, value_enum, default_value = "bin")]
    pub format: TableFormat,
    /// Output directory for samples and ks.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
