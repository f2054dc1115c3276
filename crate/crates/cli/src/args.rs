use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "runchart",
    version,
    about = "Distribution-free runs-rule control charts",
    after_help = "Exit codes: 0 ok, 1 verification mismatch, 2 monitor signal, \
                  64 bad flags or configuration, 65 bad input data, 70 internal error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Conditional distribution of a runs statistic given the number of ones.
    Dist(DistArgs),
    /// Limit trajectory for a fixed bit or observation sequence.
    Limits(LimitsArgs),
    /// Stream observations through a chart, one record per line.
    Monitor(MonitorArgs),
    /// Monte Carlo run-length estimate for one scenario.
    Simulate(SimulateArgs),
    /// Run-length estimates over several binarization cutoffs.
    Sweep(SweepArgs),
    /// Compare the imbedded-chain engine with exhaustive enumeration.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    /// Longest run of ones (R-2).
    #[value(alias = "r2")]
    #[serde(alias = "r2")]
    LongestRun,
    /// Scan statistic over a window (R-1).
    #[value(alias = "r1")]
    #[serde(alias = "r1")]
    Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArithmeticName {
    Exact,
    Float,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistName {
    Normal,
    #[value(alias = "student-t")]
    #[serde(alias = "student-t")]
    T,
    Exponential,
    Uniform,
}

#[derive(Debug, Clone, Args)]
pub struct FormatArgs {
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct ArithmeticArgs {
    /// Exact rationals, doubles, or exact up to --exact-max-n.
    #[arg(long, value_enum)]
    pub arithmetic: Option<ArithmeticName>,
    #[arg(long)]
    pub exact_max_n: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ChartArgs {
    /// JSON or TOML file with default settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleName>,
    /// Scan window r (scan rule only).
    #[arg(long, short = 'r')]
    pub window: Option<usize>,
    /// Target conditional signal probability.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Binarization cutoff: an observation y becomes 1 when y >= c.
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    /// Shift to detect; sets c = mu - 1 unless --c is given.
    #[arg(long, allow_negative_numbers = true)]
    pub mu_hint: Option<f64>,
    /// First monitored time index.
    #[arg(long)]
    pub startup_nu: Option<usize>,
    /// Use deterministic limits without the randomized boundary test.
    #[arg(long)]
    pub no_randomize: bool,
    /// Coin seed (default from RUNCHART_SEED, else 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub arithmetic: ArithmeticArgs,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[arg(long, value_enum, default_value = "longest-run")]
    pub rule: RuleName,
    #[arg(long, short = 'r')]
    pub window: Option<usize>,
    /// Sequence length.
    #[arg(long)]
    pub n: usize,
    /// Number of ones.
    #[arg(long)]
    pub m: usize,
    /// Longest-run threshold: report P(L_n < d | N_n = m).
    #[arg(long)]
    pub d: Option<usize>,
    /// Scan threshold: report P(S_n(r) < s | N_n = m).
    #[arg(long)]
    pub s: Option<usize>,
    /// Report the whole pmf instead of a single probability.
    #[arg(long)]
    pub pmf: bool,
    /// Include the compound pattern set in the output.
    #[arg(long)]
    pub dump_patterns: bool,
    #[command(flatten)]
    pub arithmetic: ArithmeticArgs,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct LimitsArgs {
    #[command(flatten)]
    pub chart: ChartArgs,
    /// Bit sequence such as 0110100.
    #[arg(long, conflicts_with = "input")]
    pub bits: Option<String>,
    /// Observation file, one value per line (default stdin).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub chart: ChartArgs,
    /// Observation file, one value or `t,value` per line (default stdin).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum)]
    pub dist: Option<DistName>,
    /// Degrees of freedom for --dist t.
    #[arg(long)]
    pub df: Option<f64>,
    /// Rate for --dist exponential.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub low: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub high: Option<f64>,
    /// Mean shift after the change point (0 = in control).
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// In-control observations before the change point (default 20 when
    /// shifted, 0 otherwise).
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Change point counted after the warm-up.
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub chart: ChartArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Also test the in-control run lengths against geometric(alpha).
    #[arg(long)]
    pub geometric: bool,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub chart: ChartArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub cs: Vec<f64>,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 12)]
    pub max_n: usize,
    /// Largest n for the two-step joint comparison.
    #[arg(long, default_value_t = 10)]
    pub joint_max_n: usize,
    #[command(flatten)]
    pub format: FormatArgs,
}
