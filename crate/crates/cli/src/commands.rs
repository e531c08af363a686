use clap::error::ErrorKind;
use clap::CommandFactory;
use serde::Serialize;
use serde_json::{json, Map, Value};

use liftdesign::derived::TruncationPolicy;
use liftdesign::design::{
    critical_value, critical_value_multi, min_sample_size_multi, min_sample_size_single,
    power_curve, power_curve_multi, power_multi_cell, power_single_cell, AudienceSpec, Backend,
    CurvePoint, Method, MultiCellTarget, SingleCellTarget, Sweep,
};
use liftdesign::model::{LiftParams, MultiCellDesign, SplitSpec, StatisticParams, StudyDesign};
use liftdesign::simulate::{simulate_diff, simulate_lift, SimulationConfig};
use liftdesign::validate::{run_campaign, timing_comparison, CampaignConfig};

use crate::args::{
    Cli, Command, CriticalValueArgs, CurvesArgs, Format, Global, Layout, MethodArg, PowerArgs,
    SampleSizeArgs, SimulateArgs, SweepArg, TableArgs, ValidateArgs,
};

pub enum Failure {
    /// Bad or missing flags; exit code 2.
    Usage(ErrorKind, String),
    /// The computation itself failed; exit code 1.
    Compute(String),
}

impl From<liftdesign::Error> for Failure {
    fn from(e: liftdesign::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage(kind: ErrorKind, msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(kind, msg.to_string())
}

impl Failure {
    /// Turns a usage failure into a clap error carrying the subcommand's
    /// usage line.
    pub fn into_clap(kind: ErrorKind, msg: String, subcommand: &str) -> clap::Error {
        let mut cmd = Cli::command();
        cmd.build();
        match cmd.find_subcommand_mut(subcommand) {
            Some(sub) => sub.error(kind, msg),
            None => cmd.error(kind, msg),
        }
    }
}

fn missing(flag: &str) -> Failure {
    usage(
        ErrorKind::MissingRequiredArgument,
        format!("the following required argument was not provided: {flag}"),
    )
}

fn conflict(msg: impl std::fmt::Display) -> Failure {
    usage(ErrorKind::ArgumentConflict, msg)
}

fn require<T: Copy>(value: Option<T>, flag: &str) -> Outcome<T> {
    value.ok_or_else(|| missing(flag))
}

fn require_positive(value: Option<f64>, flag: &str) -> Outcome<f64> {
    let x = require(value, flag)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(usage(
            ErrorKind::ValueValidation,
            format!("invalid value '{x}' for '{flag}': must be positive here"),
        ))
    }
}

fn whole(x: f64) -> u64 {
    x.round() as u64
}

fn check_finite(name: &str, x: f64) -> Outcome<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Failure::Compute(format!(
            "{name} came out non-finite ({x})"
        )))
    }
}

/// Everything a command produced, ready to print in either format.
pub struct Report {
    pub command: &'static str,
    pub inputs: Value,
    pub result: Value,
    pub csv: Vec<u8>,
    pub warnings: Vec<String>,
    /// Extra line for stderr, printed whatever the format.
    pub summary: Option<String>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: &'static str,
    command: &'static str,
    inputs: &'a Value,
    result: &'a Value,
    seed: u64,
    warnings: &'a [String],
}

impl Report {
    pub fn to_json(&self, seed: u64) -> String {
        let envelope = Envelope {
            schema_version: "1",
            command: self.command,
            inputs: &self.inputs,
            result: &self.result,
            seed,
            warnings: &self.warnings,
        };
        let mut s = serde_json::to_string_pretty(&envelope).expect("envelope serialises");
        s.push('\n');
        s
    }
}

fn csv_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Outcome<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| Failure::Compute(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Failure::Compute(e.to_string()))
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("payload serialises")
}

fn inputs<A: Serialize>(global: &Global, method: Option<Method>, args: &A) -> Value {
    let mut map = Map::new();
    map.insert("seed".into(), json!(global.seed));
    map.insert("samples".into(), json!(global.samples));
    map.insert("method".into(), to_value(&method));
    map.insert("format".into(), to_value(&global.format));
    map.insert("alpha".into(), json!(global.alpha));
    if let Value::Object(fields) = to_value(args) {
        map.extend(fields);
    }
    Value::Object(map)
}

fn sim_config(global: &Global) -> Outcome<SimulationConfig> {
    Ok(SimulationConfig::new(global.samples, global.seed)?)
}

fn backend(global: &Global, method: Method) -> Outcome<Backend> {
    Ok(match method {
        Method::Derived => Backend::derived(),
        Method::Simulated => Backend::simulated(sim_config(global)?),
    })
}

/// The method a single-cell command runs with.
fn single_method(global: &Global, default: Method) -> Method {
    match global.method {
        Some(MethodArg::Derived) => Method::Derived,
        Some(MethodArg::Simulated) => Method::Simulated,
        None => default,
    }
}

/// Two cells can only be simulated.
fn multi_method(global: &Global) -> Outcome<Method> {
    if global.method == Some(MethodArg::Derived) {
        Err(conflict("--method derived is not available with --multi-cell; the difference of lifts is simulated"))
    } else {
        Ok(Method::Simulated)
    }
}

fn split(layout: &Layout) -> Outcome<SplitSpec> {
    Ok(SplitSpec::new(layout.split, layout.reach)?)
}

fn multi_only_flags(layout: &Layout) -> Outcome<()> {
    if layout.multi_cell {
        return Ok(());
    }
    for (flag, value) in [("--lift-a", layout.lift_a), ("--diff", layout.diff)] {
        if value.is_some() {
            return Err(conflict(format!("{flag} only applies with --multi-cell")));
        }
    }
    Ok(())
}

fn sampling_warnings(params: &StatisticParams, discarded: u64, warnings: &mut Vec<String>) {
    if discarded > 0 {
        let what = match params {
            StatisticParams::Lift(_) => "lift",
            StatisticParams::Difference { .. } => "difference",
        };
        warnings.push(format!(
            "{discarded} draws with zero control conversions were redrawn while sampling the {what}"
        ));
    }
}

pub fn name(command: &Command) -> &'static str {
    match command {
        Command::Power(_) => "power",
        Command::SampleSize(_) => "sample-size",
        Command::CriticalValue(_) => "critical-value",
        Command::Simulate(_) => "simulate",
        Command::Table(_) => "table",
        Command::Curves(_) => "curves",
        Command::Validate(_) => "validate",
    }
}

pub fn run(cli: &Cli) -> Outcome<Report> {
    let g = &cli.global;
    let mut report = match &cli.command {
        Command::Power(a) => power(g, a),
        Command::SampleSize(a) => sample_size(g, a),
        Command::CriticalValue(a) => critical(g, a),
        Command::Simulate(a) => simulate(g, a),
        Command::Table(a) => table(g, a),
        Command::Curves(a) => curves(g, a),
        Command::Validate(a) => validate(g, a),
    }?;
    if g.format == Format::Json {
        report.csv.clear();
    }
    Ok(report)
}

#[derive(Serialize)]
struct PowerRow {
    power: f64,
    critical_value: f64,
    method: Method,
}

fn power(g: &Global, a: &PowerArgs) -> Outcome<Report> {
    multi_only_flags(&a.layout)?;
    let cc = require(a.control_conversions, "--control-conversions")?;
    let split = split(&a.layout)?;
    let (method, report) = if a.layout.multi_cell {
        if a.lift.is_some() {
            return Err(conflict(
                "--lift does not apply with --multi-cell; use --lift-a and --diff",
            ));
        }
        let method = multi_method(g)?;
        let lift_a = require(a.layout.lift_a, "--lift-a")?;
        let diff = require_positive(a.layout.diff, "--diff")?;
        let design = MultiCellDesign::new(cc, lift_a, diff, split, g.alpha)?;
        (method, power_multi_cell(&design, &sim_config(g)?)?)
    } else {
        let method = single_method(g, Method::Derived);
        let lift = require_positive(a.lift, "--lift")?;
        let design = StudyDesign::new(cc, lift, split, g.alpha)?;
        (method, power_single_cell(&design, &backend(g, method)?)?)
    };
    check_finite("power", report.power)?;
    check_finite("critical value", report.critical_value)?;
    let csv = csv_rows([PowerRow {
        power: report.power,
        critical_value: report.critical_value,
        method: report.method,
    }])?;
    Ok(Report {
        command: "power",
        inputs: inputs(g, Some(method), a),
        result: to_value(&report),
        csv,
        warnings: Vec::new(),
        summary: None,
    })
}

#[derive(Serialize)]
struct SampleSizeResult {
    /// Smallest integer control count at or above the bisection result.
    control_conversions: u64,
    min_control_conversions: f64,
    achieved_power: f64,
    target_power: f64,
    method: Method,
    iterations: u32,
    doublings: u32,
    bracket: (f64, f64),
    audience: Option<u64>,
}

#[derive(Serialize)]
struct SampleSizeRow {
    control_conversions: u64,
    min_control_conversions: f64,
    achieved_power: f64,
    target_power: f64,
    method: Method,
    audience: Option<u64>,
}

fn sample_size(g: &Global, a: &SampleSizeArgs) -> Outcome<Report> {
    multi_only_flags(&a.layout)?;
    if a.power <= g.alpha {
        return Err(usage(
            ErrorKind::ValueValidation,
            format!(
                "invalid value '{}' for '--power': must exceed --alpha ({})",
                a.power, g.alpha
            ),
        ));
    }
    let split = split(&a.layout)?;
    let groups_default = if a.layout.multi_cell { 4 } else { 2 };
    let audience = match (a.conversion_rate, a.groups) {
        (Some(rate), groups) => Some(AudienceSpec {
            conversion_rate: rate,
            num_groups: groups.unwrap_or(groups_default),
        }),
        (None, Some(_)) => return Err(missing("--conversion-rate")),
        (None, None) => None,
    };
    let (method, r) = if a.layout.multi_cell {
        if a.lift.is_some() {
            return Err(conflict(
                "--lift does not apply with --multi-cell; use --lift-a and --diff",
            ));
        }
        let method = multi_method(g)?;
        let target = MultiCellTarget {
            expected_lift_a: require(a.layout.lift_a, "--lift-a")?,
            min_detectable_difference: require_positive(a.layout.diff, "--diff")?,
            split,
            alpha: g.alpha,
        };
        (
            method,
            min_sample_size_multi(&target, a.power, &sim_config(g)?, audience)?,
        )
    } else {
        let method = single_method(g, Method::Simulated);
        let target = SingleCellTarget {
            expected_lift: require_positive(a.lift, "--lift")?,
            split,
            alpha: g.alpha,
        };
        (
            method,
            min_sample_size_single(&target, a.power, &backend(g, method)?, audience)?,
        )
    };
    check_finite("minimum control conversions", r.min_control_conversions)?;
    check_finite("achieved power", r.achieved_power)?;
    let audience = r
        .audience
        .map(|n| check_finite("audience", n).map(whole))
        .transpose()?;
    let result = SampleSizeResult {
        control_conversions: r.min_control_conversions.ceil() as u64,
        min_control_conversions: r.min_control_conversions,
        achieved_power: r.achieved_power,
        target_power: r.target_power,
        method: r.method,
        iterations: r.iterations,
        doublings: r.doublings,
        bracket: r.bracket,
        audience,
    };
    let csv = csv_rows([SampleSizeRow {
        control_conversions: result.control_conversions,
        min_control_conversions: result.min_control_conversions,
        achieved_power: result.achieved_power,
        target_power: result.target_power,
        method: result.method,
        audience: result.audience,
    }])?;
    Ok(Report {
        command: "sample-size",
        inputs: inputs(g, Some(method), a),
        result: to_value(&result),
        csv,
        warnings: Vec::new(),
        summary: None,
    })
}

#[derive(Serialize)]
struct CriticalValueResult {
    critical_value: f64,
    method: Method,
    null_params: StatisticParams,
}

#[derive(Serialize)]
struct CriticalValueRow {
    critical_value: f64,
    method: Method,
}

fn critical(g: &Global, a: &CriticalValueArgs) -> Outcome<Report> {
    if !a.layout.multi_cell && a.layout.lift_a.is_some() {
        return Err(conflict("--lift-a only applies with --multi-cell"));
    }
    if a.layout.diff.is_some() {
        return Err(conflict("--diff does not affect the null critical value"));
    }
    let cc = require(a.control_conversions, "--control-conversions")?;
    let split = split(&a.layout)?;
    let (method, c, null_params) = if a.layout.multi_cell {
        let method = multi_method(g)?;
        let lift_a = require(a.layout.lift_a, "--lift-a")?;
        // The null does not depend on the difference; any positive value
        // satisfies the design's validation.
        let design = MultiCellDesign::new(cc, lift_a, 1.0, split, g.alpha)?;
        let (cell_a, cell_b) = design.null_params()?;
        let c = critical_value_multi(&design, &sim_config(g)?)?;
        (method, c, StatisticParams::Difference { cell_a, cell_b })
    } else {
        let method = single_method(g, Method::Derived);
        let design = StudyDesign::new(cc, 0.0, split, g.alpha)?;
        let c = critical_value(&design, &backend(g, method)?)?;
        (method, c, StatisticParams::Lift(design.null_params()?))
    };
    check_finite("critical value", c)?;
    let result = CriticalValueResult {
        critical_value: c,
        method,
        null_params,
    };
    Ok(Report {
        command: "critical-value",
        inputs: inputs(g, Some(method), a),
        result: to_value(&result),
        csv: csv_rows([CriticalValueRow {
            critical_value: c,
            method,
        }])?,
        warnings: Vec::new(),
        summary: None,
    })
}

#[derive(Serialize)]
struct Quantiles {
    p01: f64,
    p05: f64,
    p50: f64,
    p95: f64,
    p99: f64,
}

#[derive(Serialize)]
struct SimulateResult {
    statistic: &'static str,
    num_samples: usize,
    num_discarded: u64,
    mean: f64,
    quantiles: Quantiles,
    params: StatisticParams,
}

fn simulate(g: &Global, a: &SimulateArgs) -> Outcome<Report> {
    multi_only_flags(&a.layout)?;
    let cc = require(a.control_conversions, "--control-conversions")?;
    let split = split(&a.layout)?;
    let config = sim_config(g)?;
    let samples = if a.layout.multi_cell {
        multi_method(g)?;
        if a.lift.is_some() {
            return Err(conflict(
                "--lift does not apply with --multi-cell; use --lift-a and --diff",
            ));
        }
        let lift_a = require(a.layout.lift_a, "--lift-a")?;
        let diff = require(a.layout.diff, "--diff")?;
        let cell_a = LiftParams::from_design(cc, &split, lift_a)?;
        let cell_b = LiftParams::from_design(cc, &split, lift_a + diff)?;
        simulate_diff(&cell_a, &cell_b, &config)?
    } else {
        if g.method == Some(MethodArg::Derived) {
            return Err(conflict("simulate always samples; drop --method derived"));
        }
        let lift = require(a.lift, "--lift")?;
        simulate_lift(&LiftParams::from_design(cc, &split, lift)?, &config)?
    };
    let mut warnings = Vec::new();
    sampling_warnings(&samples.params, samples.num_discarded, &mut warnings);

    let csv = if g.format == Format::Csv {
        let mut out = Vec::new();
        samples.write_csv(&mut out)?;
        out
    } else {
        Vec::new()
    };
    let q = |p: f64| -> Outcome<f64> { check_finite("quantile", samples.quantile(p)?) };
    let result = SimulateResult {
        statistic: match samples.params {
            StatisticParams::Lift(_) => "lift",
            StatisticParams::Difference { .. } => "diff",
        },
        num_samples: samples.len(),
        num_discarded: samples.num_discarded,
        mean: check_finite("mean", samples.mean())?,
        quantiles: Quantiles {
            p01: q(0.01)?,
            p05: q(0.05)?,
            p50: q(0.5)?,
            p95: q(0.95)?,
            p99: q(0.99)?,
        },
        params: samples.params,
    };
    Ok(Report {
        command: "simulate",
        inputs: inputs(g, Some(Method::Simulated), a),
        result: to_value(&result),
        csv,
        warnings,
        summary: None,
    })
}

/// Effect sizes of the published sample-size table, largest first.
pub const TABLE_EFFECTS: [f64; 4] = [0.10, 0.05, 0.02, 0.01];

#[derive(Serialize)]
struct TableRow {
    effect: f64,
    single_cc: u64,
    single_n: u64,
    multi_cca: u64,
    multi_n: u64,
}

#[derive(Serialize)]
struct TableResult {
    single_method: Method,
    multi_method: Method,
    target_power: f64,
    conversion_rate: f64,
    lift_a: f64,
    rows: Vec<TableRow>,
}

fn table(g: &Global, a: &TableArgs) -> Outcome<Report> {
    if a.power <= g.alpha {
        return Err(usage(
            ErrorKind::ValueValidation,
            format!(
                "invalid value '{}' for '--power': must exceed --alpha ({})",
                a.power, g.alpha
            ),
        ));
    }
    let single_method = single_method(g, Method::Simulated);
    let single_backend = backend(g, single_method)?;
    let config = sim_config(g)?;
    let split = SplitSpec::even();
    let mut rows = Vec::new();
    for effect in TABLE_EFFECTS {
        let single = min_sample_size_single(
            &SingleCellTarget {
                expected_lift: effect,
                split,
                alpha: g.alpha,
            },
            a.power,
            &single_backend,
            Some(AudienceSpec {
                conversion_rate: a.conversion_rate,
                num_groups: 2,
            }),
        )?;
        let multi = min_sample_size_multi(
            &MultiCellTarget {
                expected_lift_a: a.lift_a,
                min_detectable_difference: effect,
                split,
                alpha: g.alpha,
            },
            a.power,
            &config,
            Some(AudienceSpec {
                conversion_rate: a.conversion_rate,
                num_groups: 4,
            }),
        )?;
        let audience = |n: Option<f64>| check_finite("audience", n.unwrap_or(f64::NAN)).map(whole);
        rows.push(TableRow {
            effect,
            single_cc: check_finite("single-cell conversions", single.min_control_conversions)?
                .ceil() as u64,
            single_n: audience(single.audience)?,
            multi_cca: check_finite("multi-cell conversions", multi.min_control_conversions)?.ceil()
                as u64,
            multi_n: audience(multi.audience)?,
        });
    }
    let csv = csv_rows(&rows)?;
    let result = TableResult {
        single_method,
        multi_method: Method::Simulated,
        target_power: a.power,
        conversion_rate: a.conversion_rate,
        lift_a: a.lift_a,
        rows,
    };
    Ok(Report {
        command: "table",
        inputs: inputs(g, Some(single_method), a),
        result: to_value(&result),
        csv,
        warnings: Vec::new(),
        summary: None,
    })
}

#[derive(Serialize)]
struct CurveRow {
    effect: f64,
    x: f64,
    power: f64,
}

#[derive(Serialize)]
struct CurvesResult {
    sweep: SweepArg,
    multi_cell: bool,
    method: Method,
    rows: Vec<CurveRow>,
}

/// Grid used when --grid is not given.
pub fn default_grid(sweep: SweepArg) -> Vec<f64> {
    match sweep {
        SweepArg::Conversions => (1..=20).map(|i| 2_500.0 * i as f64).collect(),
        SweepArg::Reach => (1..=10).map(|i| i as f64 / 10.0).collect(),
        SweepArg::Split => (1..=9).map(|i| i as f64 / 10.0).collect(),
    }
}

fn curves(g: &Global, a: &CurvesArgs) -> Outcome<Report> {
    if a.lifts.is_empty() {
        return Err(missing("--lifts"));
    }
    if let Some(&bad) = a.lifts.iter().find(|&&l| l <= 0.0) {
        return Err(usage(
            ErrorKind::ValueValidation,
            format!("invalid value '{bad}' for '--lifts': power curves need positive effects"),
        ));
    }
    let grid = a.grid.clone().unwrap_or_else(|| default_grid(a.sweep));
    let split = split(&a.layout)?;
    let mut rows = Vec::new();
    let method = if a.layout.multi_cell {
        if a.sweep != SweepArg::Conversions {
            return Err(conflict("--multi-cell curves only sweep conversions"));
        }
        if a.layout.diff.is_some() {
            return Err(conflict(
                "--diff does not apply to curves; the differences come from --lifts",
            ));
        }
        let method = multi_method(g)?;
        let config = sim_config(g)?;
        let lift_a = a.layout.lift_a.unwrap_or(0.05);
        for &effect in &a.lifts {
            let template =
                MultiCellDesign::new(a.control_conversions, lift_a, effect, split, g.alpha)?;
            let points = power_curve_multi(&template, &grid, &config)?;
            push_points(&mut rows, effect, points)?;
        }
        method
    } else {
        multi_only_flags(&a.layout)?;
        let method = single_method(g, Method::Derived);
        let backend = backend(g, method)?;
        let sweep = match a.sweep {
            SweepArg::Conversions => Sweep::ControlConversions,
            SweepArg::Reach => Sweep::Reach,
            SweepArg::Split => Sweep::ControlFraction,
        };
        for &effect in &a.lifts {
            let template = StudyDesign::new(a.control_conversions, effect, split, g.alpha)?;
            let points = power_curve(sweep, &template, &grid, &backend)?;
            push_points(&mut rows, effect, points)?;
        }
        method
    };
    let csv = csv_rows(&rows)?;
    let result = CurvesResult {
        sweep: a.sweep,
        multi_cell: a.layout.multi_cell,
        method,
        rows,
    };
    Ok(Report {
        command: "curves",
        inputs: inputs(g, Some(method), a),
        result: to_value(&result),
        csv,
        warnings: Vec::new(),
        summary: None,
    })
}

fn push_points(rows: &mut Vec<CurveRow>, effect: f64, points: Vec<CurvePoint>) -> Outcome<()> {
    for p in points {
        rows.push(CurveRow {
            effect,
            x: p.x,
            power: check_finite("power", p.power)?,
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct RunRow {
    run: usize,
    lambda_t: f64,
    lambda_c: f64,
    reach: f64,
    scale: f64,
    ks_statistic: f64,
    p_value: f64,
    rejected: bool,
}

fn validate(g: &Global, a: &ValidateArgs) -> Outcome<Report> {
    let mut warnings = Vec::new();
    if g.method.is_some() {
        warnings
            .push("--method is ignored by validate, which always compares both back ends".into());
    }
    let config = CampaignConfig {
        num_runs: a.runs as usize,
        samples_per_run: a.run_samples as usize,
        seed: g.seed,
        alpha: g.alpha,
        ..CampaignConfig::default()
    };
    let mut report = run_campaign(&config)?;
    if a.timing {
        let design = StudyDesign::new(
            a.control_conversions,
            0.0,
            SplitSpec::new(a.split, a.reach)?,
            g.alpha,
        )?;
        let timing = timing_comparison(
            &design.null_params()?,
            g.samples,
            1.0 - g.alpha,
            g.seed,
            &TruncationPolicy::default(),
        )?;
        report.timing = Some(timing);
    }
    let mut rows = Vec::with_capacity(report.runs.len());
    for (i, r) in report.runs.iter().enumerate() {
        check_finite("K-S statistic", r.ks_statistic)?;
        check_finite("p-value", r.p_value)?;
        rows.push(RunRow {
            run: i,
            lambda_t: r.params.lambda_t,
            lambda_c: r.params.lambda_c,
            reach: r.params.reach,
            scale: r.params.scale,
            ks_statistic: r.ks_statistic,
            p_value: r.p_value,
            rejected: r.rejected,
        });
    }
    let mut summary = report.summary();
    if let Some(t) = &report.timing {
        summary.push_str(&format!(
            "; exact quantile {:.3}s vs {} draws {:.3}s",
            t.derived_seconds, t.num_samples, t.simulated_seconds
        ));
    }
    let mut result = to_value(&report);
    result["summary"] = json!(summary);
    Ok(Report {
        command: "validate",
        inputs: inputs(g, None, a),
        result,
        csv: csv_rows(&rows)?,
        warnings,
        summary: Some(summary),
    })
}
