use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use d2dlab::simulator::{CacheDraw, PolicySource};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "d2dlab", version, about = "Caching-based D2D content delivery toolkit")]
pub struct Cli {
    /// Significant digits for every number written to data files.
    #[arg(long, global = true, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..=17))]
    pub precision: u32,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an MZipf model to an access log.
    Fit(FitArgs),
    /// Optimal random caching policy, or an m* table with --sweep.
    Policy(PolicyArgs),
    /// Throughput-outage points over a list of cluster sizes.
    Tradeoff(TradeoffArgs),
    /// Monte Carlo simulation at a single cluster size.
    Simulate(SimulateArgs),
    /// Compare the closed-form m* against a direct KKT solve.
    ValidateMstar(ValidateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Zipf factor.
    #[arg(long)]
    pub gamma: f64,
    /// Plateau factor.
    #[arg(long, default_value_t = 0.0)]
    pub q: f64,
    /// Library size M.
    #[arg(long)]
    pub m_total: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NetworkArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n_users: u64,
    /// Files per device cache.
    #[arg(long, default_value_t = 1)]
    pub s_cache: u64,
    /// D2D link rate C.
    #[arg(long, default_value_t = 1.0)]
    pub rate_c: f64,
    /// TDMA reuse factor K.
    #[arg(long, default_value_t = 4)]
    pub reuse_k: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// CSV log with header user_id,content_id,region_id[,timestamp].
    #[arg(long)]
    pub log: PathBuf,
    /// Keep only rows of this region.
    #[arg(long)]
    pub region: Option<u32>,
    /// Fit result (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Rank/count table; defaults to the output path with a `.ranks.csv` suffix.
    #[arg(long)]
    pub ranks_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PolicyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    pub s_cache: u64,
    /// Cluster size for a single policy (JSON output).
    #[arg(long, required_unless_present = "sweep", conflicts_with = "sweep")]
    pub g_c: Option<u64>,
    /// Comma-separated cluster sizes for an m* table (CSV output).
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<u64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Simulate,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyChoice {
    Optimal,
    Uniform,
    Proportional,
}

impl From<PolicyChoice> for PolicySource {
    fn from(p: PolicyChoice) -> Self {
        match p {
            PolicyChoice::Optimal => PolicySource::Optimal,
            PolicyChoice::Uniform => PolicySource::Uniform,
            PolicyChoice::Proportional => PolicySource::Proportional,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrawChoice {
    WithReplacement,
    WithoutReplacement,
}

impl From<DrawChoice> for CacheDraw {
    fn from(d: DrawChoice) -> Self {
        match d {
            DrawChoice::WithReplacement => CacheDraw::WithReplacement,
            DrawChoice::WithoutReplacement => CacheDraw::WithoutReplacement,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TradeoffArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub network: NetworkArgs,
    /// Comma-separated cluster sizes; rows follow this order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub g_c: Vec<u64>,
    #[arg(long, value_enum, default_value_t = Mode::Analytic)]
    pub mode: Mode,
    #[arg(long, default_value_t = 200)]
    pub trials: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Admissibility factor in q <= kappa S g_c / gamma.
    #[arg(long, default_value_t = d2dlab::analysis::DEFAULT_KAPPA)]
    pub kappa: f64,
    #[arg(long, value_enum, default_value_t = PolicyChoice::Optimal)]
    pub policy: PolicyChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub network: NetworkArgs,
    #[arg(long)]
    pub g_c: u64,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyChoice::Optimal)]
    pub policy: PolicyChoice,
    #[arg(long, value_enum, default_value_t = DrawChoice::WithReplacement)]
    pub cache_draw: DrawChoice,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-user average throughput table.
    #[arg(long)]
    pub per_user_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 1.16)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub q: f64,
    #[arg(long, default_value_t = 10_000)]
    pub m_total: usize,
    #[arg(long, default_value_t = 1)]
    pub s_cache: u64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "10,20,50,100,200,500,1000,2000,3000,5000"
    )]
    pub g_c: Vec<u64>,
    /// Largest accepted relative deviation |theory - kkt| / kkt.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: PathBuf,
}
