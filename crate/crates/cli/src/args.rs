use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "liftdesign",
    version,
    about = "Design and validate incrementality lift studies"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo samples per distribution.
    #[arg(long, global = true, default_value_t = 1_000_000, value_parser = samples)]
    pub samples: usize,
    /// Back end; the default depends on the command.
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// One-sided significance level.
    #[arg(long, global = true, default_value_t = 0.05, value_parser = alpha)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Derived,
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Power to detect a lift (or a difference in lifts).
    Power(PowerArgs),
    /// Smallest control conversions reaching a target power.
    SampleSize(SampleSizeArgs),
    /// Null critical value of the test statistic.
    CriticalValue(CriticalValueArgs),
    /// Draw samples of the lift or of the difference in lifts.
    Simulate(SimulateArgs),
    /// Minimum sample sizes for 10, 5, 2 and 1% effects.
    Table(TableArgs),
    /// Power curves over conversions, reach or control share.
    Curves(CurvesArgs),
    /// Kolmogorov-Smirnov campaign of simulation against the exact CMF.
    Validate(ValidateArgs),
}

/// Split and cell layout shared by every design command.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Layout {
    /// Fraction of the test group reached by adverts.
    #[arg(long, default_value_t = 1.0, value_parser = reach)]
    pub reach: f64,
    /// Test-to-control size ratio s.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub split: f64,
    /// Compare two cells instead of testing one.
    #[arg(long)]
    pub multi_cell: bool,
    /// Expected lift in cell A (multi-cell).
    #[arg(long, value_parser = lift)]
    pub lift_a: Option<f64>,
    /// Difference in lifts to detect, cell B minus cell A (multi-cell).
    #[arg(long, value_parser = lift)]
    pub diff: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PowerArgs {
    #[arg(long, value_parser = conversions)]
    pub control_conversions: Option<f64>,
    /// Minimum detectable lift as a decimal (0.05 for 5%).
    #[arg(long, value_parser = lift)]
    pub lift: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub layout: Layout,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleSizeArgs {
    #[arg(long, value_parser = lift)]
    pub lift: Option<f64>,
    /// Target power.
    #[arg(long, default_value_t = 0.8, value_parser = probability)]
    pub power: f64,
    /// Conversion rate used to turn conversions into an audience size.
    #[arg(long, value_parser = rate)]
    pub conversion_rate: Option<f64>,
    /// Number of groups in the audience (2 per cell).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub groups: Option<u32>,
    #[command(flatten)]
    #[serde(flatten)]
    pub layout: Layout,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CriticalValueArgs {
    #[arg(long, value_parser = conversions)]
    pub control_conversions: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub layout: Layout,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_parser = conversions)]
    pub control_conversions: Option<f64>,
    #[arg(long, value_parser = lift)]
    pub lift: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub layout: Layout,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TableArgs {
    #[arg(long, default_value_t = 0.8, value_parser = probability)]
    pub power: f64,
    #[arg(long, default_value_t = 0.05, value_parser = rate)]
    pub conversion_rate: f64,
    /// Lift in cell A for the multi-cell columns.
    #[arg(long, default_value_t = 0.05, value_parser = lift)]
    pub lift_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepArg {
    Conversions,
    Reach,
    Split,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CurvesArgs {
    #[arg(long, value_enum, default_value_t = SweepArg::Conversions)]
    pub sweep: SweepArg,
    /// Lift levels, one curve each (differences with --multi-cell).
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.02, 0.05, 0.10], value_parser = lift)]
    pub lifts: Vec<f64>,
    /// Sweep values; defaults depend on --sweep.
    #[arg(long, value_delimiter = ',', value_parser = finite)]
    pub grid: Option<Vec<f64>>,
    /// Control conversions held fixed by the reach and split sweeps.
    #[arg(long, default_value_t = 20_000.0, value_parser = conversions)]
    pub control_conversions: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub layout: Layout,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(20..))]
    pub runs: u64,
    /// Samples simulated per run.
    #[arg(long, default_value_t = 1_000, value_parser = clap::value_parser!(u64).range(35..))]
    pub run_samples: u64,
    /// Also time the exact critical value against a simulated one of
    /// --samples draws.
    #[arg(long)]
    pub timing: bool,
    /// Control conversions for the timing comparison.
    #[arg(long, default_value_t = 20_000.0, value_parser = conversions)]
    pub control_conversions: f64,
    #[arg(long, default_value_t = 1.0, value_parser = reach)]
    pub reach: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub split: f64,
}

fn number(s: &str) -> Result<f64, String> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

fn finite(s: &str) -> Result<f64, String> {
    number(s)
}

fn positive(s: &str) -> Result<f64, String> {
    let x = number(s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be positive, got {x}"))
    }
}

fn lift(s: &str) -> Result<f64, String> {
    let x = number(s)?;
    if x < 0.0 {
        Err(format!("must not be negative, got {x}"))
    } else if x > 1.0 {
        Err(format!(
            "lifts are decimals, not percentages; did you mean {}?",
            x / 100.0
        ))
    } else {
        Ok(x)
    }
}

fn reach(s: &str) -> Result<f64, String> {
    let x = number(s)?;
    if x > 0.0 && x <= 1.0 {
        Ok(x)
    } else {
        Err(format!("must lie in (0, 1], got {x}"))
    }
}

fn rate(s: &str) -> Result<f64, String> {
    let x = number(s)?;
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err(format!("must lie in (0, 1), got {x}"))
    }
}

fn probability(s: &str) -> Result<f64, String> {
    rate(s)
}

fn alpha(s: &str) -> Result<f64, String> {
    let x = number(s)?;
    if x > 0.0 && x <= 0.5 {
        Ok(x)
    } else {
        Err(format!("must lie in (0, 0.5], got {x}"))
    }
}

fn conversions(s: &str) -> Result<f64, String> {
    let x = number(s)?;
    if x >= liftdesign::model::MIN_CONTROL_CONVERSIONS {
        Ok(x)
    } else {
        Err(format!(
            "at least {} control conversions are needed, got {x}",
            liftdesign::model::MIN_CONTROL_CONVERSIONS
        ))
    }
}

fn samples(s: &str) -> Result<usize, String> {
    let n: usize = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a whole number"))?;
    let min = liftdesign::simulate::SimulationConfig::MIN_SAMPLES;
    if n >= min {
        Ok(n)
    } else {
        Err(format!("at least {min} samples are needed, got {n}"))
    }
}
