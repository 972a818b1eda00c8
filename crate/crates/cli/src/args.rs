use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evppi::rng::DEFAULT_SEED;

#[derive(Debug, Parser)]
#[command(
    name = "voi",
    version,
    about = "Expected value of partial perfect information from PSA samples"
)]
pub struct Cli {
    /// Worker threads for estimator parallelism (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate EVPPI for one parameter subset with one method.
    Evppi(EvppiArgs),
    /// Run every applicable method on a list of subsets.
    Compare(CompareArgs),
    /// EVPI and EVPPI over a grid of willingness-to-pay values.
    Sweep(SweepArgs),
    /// Emit the cumulative-sum curve for spotting decision changes.
    Vistool(VistoolArgs),
    /// Draw a PSA sample from a model and write it as CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    So,
    Sad,
    Gp,
    Gam,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InteractionsArg {
    Auto,
    Additive,
    Pairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Table,
}

/// Where the PSA sample comes from.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// PSA CSV file.
    #[arg(long, short)]
    pub input: Option<PathBuf>,

    /// Model spec: a JSON file, or `linear_gaussian` / `nonlinear_toy` for
    /// the defaults. Without `--input` the sample is simulated from it.
    #[arg(long)]
    pub model: Option<String>,

    /// Simulations to draw when the sample comes from `--model`.
    #[arg(long, default_value_t = 10_000)]
    pub sims: usize,

    /// Seed for simulation, bootstrap and every randomised estimator step.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Willingness to pay per unit of effect.
    #[arg(long, default_value_t = 20_000.0)]
    pub wtp: f64,
}

/// Method-specific settings.
#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// Decision changes for SAD: one count for all parameters, or
    /// `name=count` entries. Required whenever SAD runs.
    #[arg(long, value_delimiter = ',')]
    pub changes: Vec<String>,

    /// Fixed SO bin count (skips the bias-controlled search).
    #[arg(long)]
    pub bins: Option<usize>,

    /// SO bias threshold: absolute (`0.1`) or a percentage of EVPI (`2%`).
    #[arg(long, default_value = "0.1")]
    pub bias_threshold: String,

    /// Monte Carlo replicates for the SO bias estimate.
    #[arg(long, default_value_t = 2000)]
    pub bias_mc: usize,

    /// GAM interaction structure.
    #[arg(long, value_enum, default_value_t = InteractionsArg::Auto)]
    pub interactions: InteractionsArg,

    /// Outer draws for nested Monte Carlo.
    #[arg(long, default_value_t = 1000)]
    pub outer: usize,

    /// Inner draws for nested Monte Carlo.
    #[arg(long, default_value_t = 1000)]
    pub inner: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Decimals in tables (2 or fewer).
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=2))]
    pub decimals: u8,
}

#[derive(Debug, Clone, Args)]
pub struct EvppiArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, value_enum)]
    pub method: MethodArg,

    /// Parameters of interest, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub params: Vec<String>,

    #[command(flatten)]
    pub estimator: EstimatorArgs,

    /// Bootstrap replicates for a standard error (0 to skip).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// A parameter subset (comma separated); repeat for more rows.
    /// Defaults to every single parameter.
    #[arg(long)]
    pub subset: Vec<String>,

    #[command(flatten)]
    pub estimator: EstimatorArgs,

    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// A parameter subset (comma separated); repeat for more curves.
    #[arg(long)]
    pub subset: Vec<String>,

    /// Willingness-to-pay grid: `start:stop:step` or a comma list.
    #[arg(long, default_value = "0:50000:1000")]
    pub grid: String,

    #[arg(long, value_enum, default_value_t = MethodArg::Gam)]
    pub method: MethodArg,

    #[command(flatten)]
    pub estimator: EstimatorArgs,

    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VistoolArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long)]
    pub param: String,

    /// Treatment of interest (name or index); defaults to the second.
    #[arg(long)]
    pub t: Option<String>,

    /// Reference treatment (name or index); defaults to the first.
    #[arg(long)]
    pub t_ref: Option<String>,

    /// CSV destination; the curve goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Model spec: a JSON file, or `linear_gaussian` / `nonlinear_toy`.
    #[arg(long)]
    pub model: String,

    #[arg(long, default_value_t = 10_000)]
    pub sims: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[arg(long, default_value_t = 20_000.0)]
    pub wtp: f64,

    /// CSV destination; provenance goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}
