//! Command-line front end. Each subcommand computes one table and renders
//! it as CSV (the default), JSON or SVG.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::distributional::DistributionalBias;
use crate::error::Error;
use crate::levelset::StateSet;
use crate::model::{PerformanceMeasure, QueueParams, RbmParams, Tabulated, WeightFunction};
use crate::montecarlo::{self, Scheme, SimConfig};
use crate::mse::MseModel;
use crate::poisson::{good_states_functional, BiasFunction};
use crate::quad::QuadSpec;
use crate::svg::{line_chart, Series};
use crate::transition;
use crate::validate;

/// Exit status for bad arguments or inputs outside a model's domain.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for numerical failures (non-convergence, divergence).
pub const EXIT_NUMERIC: i32 = 3;
/// Exit status when `validate` finds a failing check.
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "rbm-transient", version, about = "Initial-transient analysis for reflected Brownian motion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transition density and CDF over a grid of target states.
    #[command(allow_negative_numbers = true)]
    Density(DensityArgs),
    /// Centered Poisson solution h_c over a grid of initial states.
    #[command(allow_negative_numbers = true)]
    Bias(BiasArgs),
    /// Good-state sets for a list of thresholds c.
    #[command(allow_negative_numbers = true)]
    Goodstates(GoodStatesArgs),
    /// Threshold error tolerance eps*(x) over a grid.
    #[command(allow_negative_numbers = true)]
    Tolerance(ToleranceArgs),
    /// MSE decomposition of the time average for each (x, t).
    #[command(allow_negative_numbers = true)]
    Mse(MseArgs),
    /// Monte Carlo estimates of the bias constant, variance and MSE.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Run the built-in check suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Drift magnitude r > 0 (default 1).
    #[arg(long, conflicts_with = "queue")]
    pub r: Option<f64>,
    /// Variance rate sigma^2 > 0 (default 2).
    #[arg(long, conflicts_with = "queue")]
    pub sigma2: Option<f64>,
    /// Queue form `lambda,mu,m,varA,varS`.
    #[arg(long, value_name = "LAMBDA,MU,M,VARA,VARS")]
    pub queue: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct QuadArgs {
    #[arg(long, default_value_t = 1e-10)]
    pub abs_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureKind {
    Identity,
    Square,
    Exponential,
    Indicator,
    Tabulated,
}

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    #[arg(long, value_enum, default_value = "identity")]
    pub measure: MeasureKind,
    /// Rate of the exponential measure.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Level of the indicator measure.
    #[arg(long)]
    pub b: Option<f64>,
    /// CSV file of `x,f(x)` rows for the tabulated measure.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 0.0)]
    pub x: f64,
    /// Largest y (default 6 EX(inf)).
    #[arg(long)]
    pub ymax: Option<f64>,
    /// Number of y rows, from 0 to ymax inclusive.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Add the spectral-representation column.
    #[arg(long)]
    pub spectral: bool,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BiasArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Largest x (default 5 EX(inf)).
    #[arg(long)]
    pub xmax: Option<f64>,
    #[arg(long, default_value_t = 51)]
    pub n: usize,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SetKind {
    Functional,
    Distributional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightKind {
    Power,
    Exponential,
}

#[derive(Debug, Clone, Args)]
pub struct GoodStatesArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, value_enum, default_value = "functional")]
    pub set: SetKind,
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Weight for the distributional set.
    #[arg(long, value_enum, default_value = "power")]
    pub weight: WeightKind,
    /// Exponent of the power weight.
    #[arg(long, default_value_t = 0.0)]
    pub p: f64,
    /// Thresholds, comma separated and increasing (default 0, 0.1, ..., 2).
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<f64>,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ToleranceArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Largest x (default 12 EX(inf)).
    #[arg(long)]
    pub xmax: Option<f64>,
    #[arg(long, default_value_t = 121)]
    pub n: usize,
    /// Tolerance level whose crossing is reported.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MseArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Initial states, comma separated and increasing.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub x: Vec<f64>,
    /// Horizons, comma separated and increasing.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub t: Vec<f64>,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Bridge,
    Lindley,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[arg(long, default_value_t = 0.0)]
    pub x0: f64,
    /// Horizon t.
    #[arg(long, default_value_t = 50.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10_000)]
    pub replications: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub antithetic: bool,
    #[arg(long, value_enum, default_value = "bridge")]
    pub scheme: SchemeArg,
    /// Bootstrap resamples for the MSE standard error.
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Include the Monte Carlo checks (minutes).
    #[arg(long)]
    pub full: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Failure of a subcommand, carrying its exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let numeric = e.is_numeric() || matches!(e, Error::NoSignChange { .. } | Error::UndefinedTolerance);
        CliError {
            code: if numeric { EXIT_NUMERIC } else { EXIT_USAGE },
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Rendered output of one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub body: String,
    pub output: Option<PathBuf>,
    /// Set by `validate` when a check fails.
    pub failed: bool,
}

/// Parse `args` (including the program name), run, write the output and
/// return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(&cli).and_then(|r| write_rendered(&r).map(|_| r)) {
        Ok(r) if r.failed => EXIT_VALIDATION,
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn write_rendered(r: &Rendered) -> CliResult<()> {
    match &r.output {
        Some(path) => std::fs::write(path, &r.body)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(r.body.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::usage(format!("cannot write to stdout: {e}")))
        }
    }
}

/// Compute and render without writing anything.
pub fn run(cli: &Cli) -> CliResult<Rendered> {
    match &cli.command {
        Command::Density(a) => finish(&a.output, density_report(a)?),
        Command::Bias(a) => finish(&a.output, bias_report(a)?),
        Command::Goodstates(a) => finish(&a.output, good_states_report(a)?),
        Command::Tolerance(a) => finish(&a.output, tolerance_report(a)?),
        Command::Mse(a) => finish(&a.output, mse_report(a)?),
        Command::Simulate(a) => finish(&a.output, simulate_report(a)?),
        Command::Validate(a) => {
            let checks = validate::run_suite(a.full);
            let failed = checks.iter().any(|c| !c.passed);
            let body = match a.output.format {
                Format::Json => to_json(&checks)?,
                Format::Csv => validate::render_text(&checks),
                Format::Svg => return Err(CliError::usage("svg output is not available for validate")),
            };
            Ok(Rendered {
                body,
                output: a.output.output.clone(),
                failed,
            })
        }
    }
}

/// A report that can be rendered in every format.
pub trait Report: Serialize {
    fn csv(&self) -> String;
    fn svg(&self) -> Option<String>;
}

fn finish<R: Report>(out: &OutputArgs, report: R) -> CliResult<Rendered> {
    let body = match out.format {
        Format::Csv => report.csv(),
        Format::Json => to_json(&report)?,
        Format::Svg => report
            .svg()
            .ok_or_else(|| CliError::usage("svg output is not available for this subcommand"))?,
    };
    Ok(Rendered {
        body,
        output: out.output.clone(),
        failed: false,
    })
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError {
            code: EXIT_NUMERIC,
            message: format!("cannot encode JSON: {e}"),
        })
}

/// Number with 12 significant digits; `inf`, `-inf` and `nan` spelled out.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    let a = rounded.abs();
    if (1e-5..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_else(|| "inf".into())
}

// --- argument handling ---

/// Parameters echoed into every report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsEcho {
    pub r: f64,
    pub sigma2: f64,
    pub eta: f64,
    pub gamma: f64,
    pub stationary_mean: f64,
    pub queue: Option<QueueParams>,
}

impl ParamsEcho {
    fn footer(&self, out: &mut String) {
        let _ = writeln!(out, "r={}", fmt_num(self.r));
        let _ = writeln!(out, "sigma2={}", fmt_num(self.sigma2));
        if let Some(q) = &self.queue {
            let _ = writeln!(
                out,
                "queue={},{},{},{},{}",
                fmt_num(q.lambda),
                fmt_num(q.mu),
                q.m,
                fmt_num(q.var_a),
                fmt_num(q.var_s)
            );
        }
    }
}

fn params_from(a: &ParamArgs) -> CliResult<(RbmParams, ParamsEcho)> {
    let (p, queue) = match &a.queue {
        Some(q) => {
            let parts: Vec<&str> = q.split(',').map(str::trim).collect();
            if parts.len() != 5 {
                return Err(CliError::usage(format!(
                    "--queue needs five comma-separated values lambda,mu,m,varA,varS, got {q:?}"
                )));
            }
            let num = |s: &str| -> CliResult<f64> {
                s.parse::<f64>()
                    .map_err(|_| CliError::usage(format!("--queue: {s:?} is not a number")))
            };
            let m: u32 = parts[2]
                .parse()
                .map_err(|_| CliError::usage(format!("--queue: server count {:?} must be a positive integer", parts[2])))?;
            let qp = QueueParams::new(num(parts[0])?, num(parts[1])?, m, num(parts[3])?, num(parts[4])?)?;
            (RbmParams::from_queue(&qp)?, Some(qp))
        }
        None => (RbmParams::new(a.r.unwrap_or(1.0), a.sigma2.unwrap_or(2.0))?, None),
    };
    let echo = ParamsEcho {
        r: p.r(),
        sigma2: p.sigma2(),
        eta: p.eta(),
        gamma: p.gamma(),
        stationary_mean: p.stationary_mean(),
        queue,
    };
    Ok((p, echo))
}

fn spec_from(q: &QuadArgs) -> CliResult<QuadSpec> {
    Ok(QuadSpec::new(q.abs_tol, q.rel_tol)?)
}

fn read_table(path: &PathBuf) -> CliResult<Tabulated> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (cells.len() == 2)
            .then(|| Some((cells[0].parse::<f64>().ok()?, cells[1].parse::<f64>().ok()?)))
            .flatten();
        match parsed {
            Some(p) => pts.push(p),
            None if i == 0 => continue,
            None => {
                return Err(CliError::usage(format!(
                    "{}:{}: expected `x,f` with two numbers",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(Tabulated::new(pts)?)
}

fn measure_from(a: &MeasureArgs) -> CliResult<PerformanceMeasure> {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| CliError::usage(format!("--measure needs --{flag}")));
    Ok(match a.measure {
        MeasureKind::Identity => PerformanceMeasure::Identity,
        MeasureKind::Square => PerformanceMeasure::Square,
        MeasureKind::Exponential => PerformanceMeasure::Exponential {
            theta: need(a.theta, "theta")?,
        },
        MeasureKind::Indicator => PerformanceMeasure::indicator_above(need(a.b, "b")?)?,
        MeasureKind::Tabulated => {
            let path = a
                .table
                .as_ref()
                .ok_or_else(|| CliError::usage("--measure tabulated needs --table"))?;
            PerformanceMeasure::Tabulated(read_table(path)?)
        }
    })
}

fn check_grid(name: &str, v: &[f64]) -> CliResult<()> {
    if v.is_empty() {
        return Err(CliError::usage(format!("--{name} must not be empty")));
    }
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CliError::usage(format!("--{name} must be finite and strictly increasing")));
    }
    Ok(())
}

fn uniform_grid(max: f64, n: usize, name: &str) -> CliResult<Vec<f64>> {
    if n < 2 {
        return Err(CliError::usage(format!("--n must be at least 2 for {name}")));
    }
    if !(max > 0.0 && max.is_finite()) {
        return Err(CliError::usage(format!("--{name} must be > 0")));
    }
    Ok((0..n).map(|i| max * i as f64 / (n - 1) as f64).collect())
}

// --- density ---

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub y: f64,
    pub p_closed: f64,
    pub cdf: f64,
    pub p_spectral: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub params: ParamsEcho,
    pub t: f64,
    pub x: f64,
    pub rows: Vec<DensityRow>,
    pub max_abs_diff: Option<f64>,
}

pub fn density_report(a: &DensityArgs) -> CliResult<DensityReport> {
    let (p, params) = params_from(&a.params)?;
    let spec = spec_from(&a.quad)?;
    let ymax = a.ymax.unwrap_or(6.0 * p.stationary_mean());
    let ys = uniform_grid(ymax, a.n, "ymax")?;
    let mut rows = Vec::with_capacity(ys.len());
    let mut max_abs_diff: Option<f64> = None;
    for y in ys {
        let p_closed = transition::density(&p, a.t, a.x, y)?;
        let cdf = transition::cdf(&p, a.t, a.x, y)?;
        let p_spectral = if a.spectral {
            let s = transition::density_spectral(&p, a.t, a.x, y, &spec)?;
            let d = (s - p_closed).abs();
            max_abs_diff = Some(max_abs_diff.map_or(d, |m| if m.is_nan() || d.is_nan() { f64::NAN } else { m.max(d) }));
            Some(s)
        } else {
            None
        };
        rows.push(DensityRow {
            y,
            p_closed,
            cdf,
            p_spectral,
        });
    }
    Ok(DensityReport {
        params,
        t: a.t,
        x: a.x,
        rows,
        max_abs_diff,
    })
}

impl Report for DensityReport {
    fn csv(&self) -> String {
        let spectral = self.max_abs_diff.is_some();
        let mut out = String::from(if spectral { "y,p_closed,cdf,p_spectral\n" } else { "y,p_closed,cdf\n" });
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", fmt_num(r.y), fmt_num(r.p_closed), fmt_num(r.cdf));
            if let Some(s) = r.p_spectral {
                let _ = write!(out, ",{}", fmt_num(s));
            }
            out.push('\n');
        }
        if let Some(d) = self.max_abs_diff {
            let _ = writeln!(out, "max_abs_diff={}", fmt_num(d));
        }
        let _ = writeln!(out, "t={}", fmt_num(self.t));
        let _ = writeln!(out, "x={}", fmt_num(self.x));
        self.params.footer(&mut out);
        out
    }

    fn svg(&self) -> Option<String> {
        let mut series = vec![Series::new("p(t,x,y)", self.rows.iter().map(|r| (r.y, r.p_closed)).collect())];
        if self.max_abs_diff.is_some() {
            series.push(
                Series::new("spectral", self.rows.iter().map(|r| (r.y, r.p_spectral.unwrap_or(f64::NAN))).collect())
                    .with_color(1),
            );
        }
        series.push(Series::new("cdf", self.rows.iter().map(|r| (r.y, r.cdf)).collect()).with_color(2));
        Some(line_chart(
            &format!("Transition law, t = {}, x = {}", fmt_num(self.t), fmt_num(self.x)),
            "y",
            "density / cdf",
            &series,
        ))
    }
}

// --- bias ---

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub x: f64,
    pub h_c: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub params: ParamsEcho,
    pub measure: String,
    pub mean: f64,
    pub cite_pi: f64,
    pub rows: Vec<BiasRow>,
}

pub fn bias_report(a: &BiasArgs) -> CliResult<BiasReport> {
    let (p, params) = params_from(&a.params)?;
    let spec = spec_from(&a.quad)?;
    let f = measure_from(&a.measure)?;
    let b = BiasFunction::new(p, f.clone(), &spec)?;
    let xs = uniform_grid(a.xmax.unwrap_or(5.0 * p.stationary_mean()), a.n, "xmax")?;
    let rows = xs
        .into_iter()
        .map(|x| {
            let h = b.h_c(x)?;
            Ok(BiasRow { x, h_c: h, beta: h.abs() })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(BiasReport {
        params,
        measure: f.label(),
        mean: b.mean(),
        cite_pi: b.cite_pi()?,
        rows,
    })
}

impl Report for BiasReport {
    fn csv(&self) -> String {
        let mut out = String::from("x,h_c,beta\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", fmt_num(r.x), fmt_num(r.h_c), fmt_num(r.beta));
        }
        let _ = writeln!(out, "cite_pi={}", fmt_num(self.cite_pi));
        let _ = writeln!(out, "mean={}", fmt_num(self.mean));
        let _ = writeln!(out, "measure={}", self.measure);
        self.params.footer(&mut out);
        out
    }

    fn svg(&self) -> Option<String> {
        Some(line_chart(
            &format!("h_c(x), {}", self.measure),
            "x",
            "h_c",
            &[Series::new("h_c", self.rows.iter().map(|r| (r.x, r.h_c)).collect())],
        ))
    }
}

// --- good states ---

/// Interval with `hi = None` when unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub lo: f64,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodStatesRow {
    pub c: f64,
    pub intervals: Vec<IntervalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodStatesReport {
    pub params: ParamsEcho,
    pub set: String,
    pub label: String,
    pub cite_pi: f64,
    pub rows: Vec<GoodStatesRow>,
}

fn to_rows(c: f64, s: &StateSet) -> GoodStatesRow {
    GoodStatesRow {
        c,
        intervals: s
            .intervals
            .iter()
            .map(|iv| IntervalRow {
                lo: iv.lo,
                hi: iv.hi.is_finite().then_some(iv.hi),
            })
            .collect(),
    }
}

pub fn good_states_report(a: &GoodStatesArgs) -> CliResult<GoodStatesReport> {
    let (p, params) = params_from(&a.params)?;
    let spec = spec_from(&a.quad)?;
    let cs: Vec<f64> = if a.c.is_empty() {
        (0..=20).map(|k| k as f64 / 10.0).collect()
    } else {
        a.c.clone()
    };
    check_grid("c", &cs)?;
    match a.set {
        SetKind::Functional => {
            let f = measure_from(&a.measure)?;
            let b = BiasFunction::new(p, f.clone(), &spec)?;
            let rows = cs
                .iter()
                .map(|&c| Ok(to_rows(c, &good_states_functional(&b, c)?)))
                .collect::<Result<Vec<_>, Error>>()?;
            Ok(GoodStatesReport {
                params,
                set: "functional".into(),
                label: f.label(),
                cite_pi: b.cite_pi()?,
                rows,
            })
        }
        SetKind::Distributional => {
            let w = match a.weight {
                WeightKind::Power => WeightFunction::power(a.p)?,
                WeightKind::Exponential => WeightFunction::Exponential {
                    theta: a
                        .measure
                        .theta
                        .ok_or_else(|| CliError::usage("--weight exponential needs --theta"))?,
                },
            };
            let d = DistributionalBias::new(p, w, &spec)?;
            let sets = d.good_states_many(&cs)?;
            let label = match w {
                WeightFunction::Power { p } => format!("power(p={p})"),
                WeightFunction::Exponential { theta } => format!("exponential(theta={theta})"),
            };
            Ok(GoodStatesReport {
                params,
                set: "distributional".into(),
                label,
                cite_pi: d.cite_pi()?,
                rows: cs.iter().zip(&sets).map(|(&c, s)| to_rows(c, s)).collect(),
            })
        }
    }
}

impl Report for GoodStatesReport {
    fn csv(&self) -> String {
        let mut out = String::from("c,lo,hi\n");
        for r in &self.rows {
            if r.intervals.is_empty() {
                let _ = writeln!(out, "{},empty,empty", fmt_num(r.c));
            }
            for iv in &r.intervals {
                let _ = writeln!(out, "{},{},{}", fmt_num(r.c), fmt_num(iv.lo), fmt_opt(iv.hi));
            }
        }
        let _ = writeln!(out, "cite_pi={}", fmt_num(self.cite_pi));
        let _ = writeln!(out, "set={}", self.set);
        let _ = writeln!(out, "label={}", self.label);
        self.params.footer(&mut out);
        out
    }

    fn svg(&self) -> Option<String> {
        let x_end = self
            .rows
            .iter()
            .flat_map(|r| r.intervals.iter().filter_map(|iv| iv.hi))
            .fold(0.0f64, f64::max)
            * 1.1;
        let series: Vec<Series> = self
            .rows
            .iter()
            .flat_map(|r| {
                r.intervals.iter().map(move |iv| {
                    let hi = iv.hi.unwrap_or(x_end);
                    Series::new("good states", vec![(iv.lo, r.c), (hi.max(iv.lo + 1e-9), r.c)])
                })
            })
            .collect();
        Some(line_chart(
            &format!("Good states ({}), {}", self.set, self.label),
            "x",
            "c",
            &series,
        ))
    }
}

// --- tolerance ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceReport {
    pub params: ParamsEcho,
    pub measure: String,
    pub kappa2: f64,
    pub mean: f64,
    pub eps: f64,
    pub rows: Vec<crate::mse::ToleranceRow>,
    pub crossings: Vec<f64>,
}

pub fn tolerance_report(a: &ToleranceArgs) -> CliResult<ToleranceReport> {
    let (p, params) = params_from(&a.params)?;
    let spec = spec_from(&a.quad)?;
    let f = measure_from(&a.measure)?;
    let m = MseModel::new(BiasFunction::new(p, f.clone(), &spec)?)?;
    let mut xs = uniform_grid(a.xmax.unwrap_or(12.0 * p.stationary_mean()), a.n, "xmax")?;
    let x_end = xs[xs.len() - 1];
    // rows at the zeros of the bias show the gap
    let zeros = m.bias().zeros(x_end)?;
    xs.extend(&zeros);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut fig = m.tolerance_figure(&xs, a.eps)?;
    for row in fig.rows.iter_mut().filter(|r| zeros.contains(&r.x)) {
        row.eps_star = None;
    }
    Ok(ToleranceReport {
        params,
        measure: f.label(),
        kappa2: m.kappa2(),
        mean: m.bias().mean(),
        eps: fig.eps,
        rows: fig.rows,
        crossings: fig.crossings,
    })
}

impl Report for ToleranceReport {
    fn csv(&self) -> String {
        let mut out = String::from("x,eps_star\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{}", fmt_num(r.x), fmt_opt(r.eps_star));
        }
        for c in &self.crossings {
            let _ = writeln!(out, "eps_star={} at x={}", fmt_num(self.eps), fmt_num(*c));
        }
        let _ = writeln!(out, "kappa2={}", fmt_num(self.kappa2));
        let _ = writeln!(out, "mean={}", fmt_num(self.mean));
        let _ = writeln!(out, "measure={}", self.measure);
        self.params.footer(&mut out);
        out
    }

    fn svg(&self) -> Option<String> {
        let pts = self
            .rows
            .iter()
            .map(|r| (r.x, r.eps_star.unwrap_or(f64::INFINITY)))
            .collect();
        let (x0, x1) = (
            self.rows.first().map_or(0.0, |r| r.x),
            self.rows.last().map_or(1.0, |r| r.x),
        );
        Some(line_chart(
            &format!("Threshold tolerance, {}", self.measure),
            "x",
            "eps*(x)",
            &[
                Series::new("eps*(x)", pts),
                Series::new(format!("eps = {}", fmt_num(self.eps)), vec![(x0, self.eps), (x1, self.eps)]).with_color(1),
            ],
        ))
    }
}

// --- mse ---

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub x: f64,
    #[serde(flatten)]
    pub decomposition: crate::mse::MseDecomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub params: ParamsEcho,
    pub measure: String,
    pub rows: Vec<MseRow>,
}

pub fn mse_report(a: &MseArgs) -> CliResult<MseReport> {
    let (p, params) = params_from(&a.params)?;
    let spec = spec_from(&a.quad)?;
    check_grid("x", &a.x)?;
    check_grid("t", &a.t)?;
    let f = measure_from(&a.measure)?;
    let m = MseModel::new(BiasFunction::new(p, f.clone(), &spec)?)?;
    let mut rows = Vec::new();
    for &x in &a.x {
        for &t in &a.t {
            rows.push(MseRow {
                x,
                decomposition: m.mse_estimate(x, t)?,
            });
        }
    }
    Ok(MseReport {
        params,
        measure: f.label(),
        rows,
    })
}

impl Report for MseReport {
    fn csv(&self) -> String {
        let mut out = String::from("x,t,kappa2,k_c,h_c_sq,eh_c2,total,cross_term,corrected_total\n");
        for r in &self.rows {
            let d = &r.decomposition;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_num(r.x),
                fmt_num(d.t),
                fmt_num(d.kappa2),
                fmt_num(d.k_c_x),
                fmt_num(d.h_c_sq),
                fmt_num(d.eh_c2),
                fmt_num(d.total),
                fmt_num(d.cross_term),
                fmt_num(d.corrected_total)
            );
        }
        let _ = writeln!(out, "measure={}", self.measure);
        self.params.footer(&mut out);
        out
    }

    fn svg(&self) -> Option<String> {
        let mut xs: Vec<f64> = self.rows.iter().map(|r| r.x).collect();
        xs.dedup();
        let series: Vec<Series> = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                Series::new(
                    format!("x = {}", fmt_num(x)),
                    self.rows
                        .iter()
                        .filter(|r| r.x == x)
                        .map(|r| (r.decomposition.t, r.decomposition.total))
                        .collect(),
                )
                .with_color(k)
            })
            .collect();
        Some(line_chart(&format!("MSE, {}", self.measure), "t", "MSE", &series))
    }
}

// --- simulate ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub quantity: String,
    /// Value predicted by the four-term expansion.
    pub analytic: f64,
    /// Value including the cross term of the second moment.
    pub analytic_corrected: f64,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub params: ParamsEcho,
    pub measure: String,
    pub x0: f64,
    pub config: SimConfig,
    /// Width of the reported intervals in standard errors.
    pub z: f64,
    pub rows: Vec<SimRow>,
}

pub fn simulate_report(a: &SimulateArgs) -> CliResult<SimulateReport> {
    let (p, params) = params_from(&a.params)?;
    let spec = spec_from(&a.quad)?;
    let f = measure_from(&a.measure)?;
    let config = SimConfig {
        seed: a.seed,
        dt: a.dt,
        horizon: a.t,
        replications: a.replications,
        antithetic: a.antithetic,
        scheme: match a.scheme {
            SchemeArg::Bridge => Scheme::Bridge,
            SchemeArg::Lindley => Scheme::Lindley,
        },
    }
    .validated()?;
    let m = MseModel::new(BiasFunction::new(p, f.clone(), &spec)?)?;
    let reps = montecarlo::run_replications(&p, &f, a.x0, &config)?;
    let target = m.bias().mean();
    let est = reps.time_average(target);
    let mse = reps.mse(target, a.resamples, a.seed);
    let d = m.mse_estimate(a.x0, a.t)?;
    let h = m.bias().h_c(a.x0)?;
    let t = a.t;
    let z = 3.0;
    let row = |quantity: &str, analytic: f64, corrected: f64, estimate: f64, se: f64| SimRow {
        quantity: quantity.into(),
        analytic,
        analytic_corrected: corrected,
        estimate,
        se,
        ci_lo: estimate - z * se,
        ci_hi: estimate + z * se,
    };
    let n = est.units as f64;
    let var_se = est.scaled_variance() * (2.0 / (n - 1.0).max(1.0)).sqrt();
    let rows = vec![
        row("bias_constant", h, h, est.bias_constant(), est.bias_constant_se()),
        row(
            "scaled_variance",
            m.kappa2(),
            t * (d.corrected_total - h * h / (t * t)),
            est.scaled_variance(),
            var_se,
        ),
        row("mse", d.total, d.corrected_total, mse.mse, mse.bootstrap_se),
    ];
    Ok(SimulateReport {
        params,
        measure: f.label(),
        x0: a.x0,
        config,
        z,
        rows,
    })
}

impl Report for SimulateReport {
    fn csv(&self) -> String {
        let mut out = String::from("quantity,analytic,analytic_corrected,estimate,se,ci_lo,ci_hi\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.quantity,
                fmt_num(r.analytic),
                fmt_num(r.analytic_corrected),
                fmt_num(r.estimate),
                fmt_num(r.se),
                fmt_num(r.ci_lo),
                fmt_num(r.ci_hi)
            );
        }
        let c = &self.config;
        let _ = writeln!(out, "x0={}", fmt_num(self.x0));
        let _ = writeln!(out, "t={}", fmt_num(c.horizon));
        let _ = writeln!(out, "dt={}", fmt_num(c.dt));
        let _ = writeln!(out, "replications={}", c.replications);
        let _ = writeln!(out, "antithetic={}", c.antithetic);
        let _ = writeln!(out, "scheme={}", if c.scheme == Scheme::Bridge { "bridge" } else { "lindley" });
        let _ = writeln!(out, "seed={}", c.seed);
        let _ = writeln!(out, "ci_z={}", fmt_num(self.z));
        let _ = writeln!(out, "measure={}", self.measure);
        self.params.footer(&mut out);
        out
    }

    fn svg(&self) -> Option<String> {
        None
    }
}
