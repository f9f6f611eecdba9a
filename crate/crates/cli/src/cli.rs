use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "acar",
    version,
    about = "Adjacent-category autoregressive models for ordinal time series"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Master random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report format. Defaults to CSV text for simulate and
    /// build-covariates and to JSON elsewhere.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a series with Gaussian covariates.
    Simulate(SimulateArgs),
    /// Fit a model by multi-start conditional maximum likelihood.
    Fit(FitArgs),
    /// Fit and run portmanteau goodness-of-fit tests.
    Diagnose(DiagnoseArgs),
    /// Test equality of the parameters of two sites.
    Compare(CompareArgs),
    /// Monte Carlo recovery or comparison-scenario study.
    Mc(McArgs),
    /// Build seasonal climate covariates from daily records.
    BuildCovariates(BuildCovariatesArgs),
    /// Search covariate subsets with a portmanteau filter.
    Search(SearchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Number of levels above zero.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of covariates.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub n: usize,
    /// `table1:1`..`table1:3`, or comma-separated values ordered
    /// omega, gamma, alpha, beta.
    #[arg(long)]
    pub theta: String,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// First year written to the output.
    #[arg(long, default_value_t = 1)]
    pub start_year: i32,
}

#[derive(Debug, Clone, Args)]
pub struct FitOptions {
    #[arg(long)]
    pub n_starts: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub eta0: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV with `year,level` or `year,proportion`.
    #[arg(long)]
    pub series: PathBuf,
    /// CSV with `year` plus covariate columns; omit for a model without covariates.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Comma-separated subset of covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// The covariate row of year `y + 1 − lag` is paired with response year `y`;
    /// 1 joins rows of equal year.
    #[arg(long, default_value_t = 1)]
    pub lag: i32,
    /// Number of levels above zero (default: largest level observed).
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Linear and quadratic column names whose vertex is reported.
    #[arg(long, value_delimiter = ',')]
    pub threshold: Option<Vec<String>>,
    /// Factor the threshold covariates were multiplied by.
    #[arg(long, default_value_t = 0.1)]
    pub threshold_scale: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Comma-separated lag counts.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub q: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SModeArg {
    AssumedZero,
    Empirical,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub series1: PathBuf,
    #[arg(long)]
    pub covariates1: Option<PathBuf>,
    #[arg(long)]
    pub series2: PathBuf,
    #[arg(long)]
    pub covariates2: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    #[arg(long, default_value_t = 1)]
    pub lag: i32,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "assumed-zero")]
    pub s_mode: SModeArg,
    #[command(flatten)]
    pub fit: FitOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum McDesignArg {
    Recovery,
    Scenario,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[arg(long, value_enum)]
    pub design: McDesignArg,
    /// Parameter for the recovery design.
    #[arg(long, default_value = "table1:1")]
    pub theta: String,
    /// Comma-separated sample sizes (the scenario design uses the first).
    #[arg(long, value_delimiter = ',', default_value = "500")]
    pub n: Vec<usize>,
    /// Replications.
    #[arg(long, default_value_t = 100)]
    pub b: usize,
    /// Scenario 1..=4 for the scenario design.
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum)]
    pub s_mode: Option<SModeArg>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[command(flatten)]
    pub fit: FitOptions,
}

#[derive(Debug, Clone, Args)]
pub struct BuildCovariatesArgs {
    /// Daily CSV with `date,tmax,tmin,prcp,snow`.
    #[arg(long)]
    pub climate: PathBuf,
    /// Multiplier for temperature columns.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Minimum share of days present per season or year.
    #[arg(long)]
    pub min_coverage: Option<f64>,
    /// Response series; when given, rows are aligned to response years.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Years between climate and the response it drives.
    #[arg(long, default_value_t = 2)]
    pub lag: i32,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Largest number of covariate columns per candidate.
    #[arg(long, default_value_t = 8)]
    pub max_covariates: usize,
    /// File listing one comma-separated candidate set per line; replaces enumeration.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}
