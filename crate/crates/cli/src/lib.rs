//! Command-line front end for `chartgeo`.
//!
//! Exit codes: 0 on success, 1 on numerical failure or a failed check,
//! 2 on bad flags or an unreadable curve file.

pub mod curve_file;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chartgeo::charts::ChartPoint;
use chartgeo::check::{run_suite, SuiteOptions, DEFAULT_SEED};
use chartgeo::functionals::speed;
use chartgeo::geodesic::{integrate, residual, shoot, ChartSwitchPolicy, ShootConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use curve_file::{CurveFile, Manifold};

#[derive(Debug, Parser)]
#[command(
    name = "chartgeo",
    version,
    about = "Geodesics and curve functionals on chart-based manifolds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the geodesic equation from an initial point and velocity.
    Integrate(IntegrateArgs),
    /// Find the geodesic between two points.
    Shoot(ShootArgs),
    /// Evaluate a functional on a stored curve.
    Eval(EvalArgs),
    /// Run the invariant suite.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    /// `euclidean:<d>` or `sphere2`.
    #[arg(long)]
    pub manifold: Manifold,
    /// Chart label (`N`, `S`, `global`) or numeric id; defaults to the first chart.
    #[arg(long)]
    pub chart: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x0: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub v0: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub t1: f64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Output path; `.csv` selects the flat export. Stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub switch_radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ShootArgs {
    #[arg(long)]
    pub manifold: Manifold,
    /// Start point: embedded coordinates on `sphere2`, chart coordinates otherwise.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub q: Vec<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 8)]
    pub multi_start: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub fd_step: f64,
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    #[arg(long)]
    pub switch_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    Length,
    Energy,
    Residual,
    Speed,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub curve: PathBuf,
    #[arg(long, value_enum)]
    pub what: Quantity,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Adds this to one off-diagonal sphere metric component.
    #[arg(long, hide = true, allow_hyphen_values = true)]
    pub inject_asymmetry: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// Exit code 2.
    Usage(String),
    /// Exit code 1.
    Numeric(String),
}

impl From<chartgeo::Error> for Failure {
    fn from(e: chartgeo::Error) -> Self {
        Failure::Numeric(e.to_string())
    }
}

/// Exit code on success.
pub type Outcome = Result<i32, Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Integrate(a) => cmd_integrate(&a, out),
        Command::Shoot(a) => cmd_shoot(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Check(a) => cmd_check(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(Failure::Numeric(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
    }
}

fn policy(radius: Option<f64>) -> Result<ChartSwitchPolicy, Failure> {
    match radius {
        Some(r) => ChartSwitchPolicy::new(r).map_err(|e| Failure::Usage(e.to_string())),
        None => Ok(ChartSwitchPolicy::default()),
    }
}

fn expect_len(flag: &str, values: &[f64], n: usize) -> Result<(), Failure> {
    if values.len() != n {
        return Err(Failure::Usage(format!(
            "--{flag} needs {n} values, got {}",
            values.len()
        )));
    }
    Ok(())
}

fn emit(file: &CurveFile, path: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    let csv = path.is_some_and(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")));
    let text = if csv { file.to_csv() } else { file.to_json() };
    let written = match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => out.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    written.map_err(Failure::Numeric)
}

pub fn cmd_integrate(a: &IntegrateArgs, out: &mut dyn Write) -> Outcome {
    let field = a.manifold.field()?;
    let atlas = field.atlas();
    let chart = match &a.chart {
        Some(name) => atlas.chart_by_name(name).map_err(|e| Failure::Usage(e.to_string()))?,
        None => atlas.chart_ids()[0],
    };
    expect_len("x0", &a.x0, atlas.dim())?;
    expect_len("v0", &a.v0, atlas.dim())?;
    if a.steps < 1 {
        return Err(Failure::Usage("--steps must be at least 1".into()));
    }
    let policy = policy(a.switch_radius)?;
    let x0 = ChartPoint::new(chart, a.x0.clone());
    let curve = integrate(&field, &x0, &a.v0, (a.t0, a.t1), a.steps, &policy)?;
    emit(
        &CurveFile::from_curve(a.manifold, &field, &curve, None)?,
        a.out.as_deref(),
        out,
    )?;
    Ok(0)
}

pub fn cmd_shoot(a: &ShootArgs, out: &mut dyn Write) -> Outcome {
    let field = a.manifold.field()?;
    let atlas = field.atlas();
    let (p, q) = match a.manifold {
        Manifold::Sphere2 => {
            expect_len("p", &a.p, 3)?;
            expect_len("q", &a.q, 3)?;
            let locate = |x: &[f64]| atlas.locate(x, 1.0).map_err(|e| Failure::Usage(e.to_string()));
            (locate(&a.p)?, locate(&a.q)?)
        }
        Manifold::Euclidean(d) => {
            expect_len("p", &a.p, d)?;
            expect_len("q", &a.q, d)?;
            let chart = atlas.chart_ids()[0];
            (ChartPoint::new(chart, a.p.clone()), ChartPoint::new(chart, a.q.clone()))
        }
    };
    let cfg = ShootConfig {
        tolerance: a.tol,
        max_iterations: a.max_iterations,
        fd_step: a.fd_step,
        multi_start: a.multi_start,
        steps: a.steps,
        damping: a.damping,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let policy = policy(a.switch_radius)?;
    let (v0, curve) = shoot(&field, &p, &q, &cfg, &policy)?;
    emit(
        &CurveFile::from_curve(a.manifold, &field, &curve, Some(v0))?,
        a.out.as_deref(),
        out,
    )?;
    Ok(0)
}

/// Twelve significant digits.
pub fn format_scalar(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.11}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        format!("{x:.*}", (11 - exp) as usize)
    } else {
        format!("{x:.11e}")
    }
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Outcome {
    let text = std::fs::read_to_string(&a.curve)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.curve.display())))?;
    let file = CurveFile::parse(&text).map_err(Failure::Usage)?;
    let manifold = file.manifold().map_err(Failure::Usage)?;
    let field = manifold.field()?;
    let curve = file.to_curve(&field).map_err(Failure::Usage)?;
    let summary = curve_file::summarize(&field, &curve, None)?;
    let line = match a.what {
        Quantity::Length => format_scalar(summary.length),
        Quantity::Energy => format_scalar(summary.energy),
        Quantity::Residual => format_scalar(residual(&field, &curve)?),
        Quantity::Speed => {
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for s in curve.samples() {
                let v = speed(&field, &curve, s.lambda)?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            format!("min {}\nmax {}", format_scalar(lo), format_scalar(hi))
        }
    };
    writeln!(out, "{line}").map_err(|e| Failure::Numeric(e.to_string()))?;
    Ok(0)
}

pub fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Outcome {
    let report = run_suite(SuiteOptions {
        seed: a.seed,
        asymmetry: a.inject_asymmetry,
    });
    out.write_all(report.render().as_bytes())
        .map_err(|e| Failure::Numeric(e.to_string()))?;
    Ok(if report.all_passed() { 0 } else { 1 })
}
