use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use quadham_core::dynamics::{
    drift_report, harmonic_oscillator, integrate_labelled, lyapunov_spectrum, IntegratorConfig, LyapunovResult, Method,
    Trajectory,
};
use quadham_core::systems::{self, System};
use quadham_core::verify::{merge, verify_system, Status, VerificationReport, VerifyOptions};
use quadham_core::{Error, ScalarField, State, VectorField};

const DEFAULT_HORIZON: f64 = 1000.0;

/// Exit code for usage errors (bad flags, unknown names, bad arity).
const EXIT_USAGE: u8 = 2;
const EXIT_CONSTRAINT: u8 = 3;

#[derive(Parser)]
#[command(name = "quadham", version, about = "Verify Poisson structures, first integrals and reductions of quadratic 4D systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the claim suite for a registered system and emit a JSON report.
    Verify(VerifyArgs),
    /// Integrate a system and write the trajectory with its integrals.
    Integrate(IntegrateArgs),
    /// Estimate the Lyapunov spectrum.
    Lyapunov(LyapunovArgs),
    /// Merge verification reports.
    Report(ReportArgs),
    /// List registered systems.
    List,
}

#[derive(Args)]
struct Common {
    /// Parameter override `name=value` (name or symbol); repeatable.
    #[arg(short, long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    system: String,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, env = "QUADHAM_SEED", default_value_t = 0)]
    seed: u64,
    /// Base pointwise tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Leave out the timestamp so identical runs give identical bytes.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct IntegrateArgs {
    /// Registered system, or `harmonic`.
    system: String,
    #[command(flatten)]
    common: Common,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t0: f64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    t1: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// rk4, rk45 or euler.
    #[arg(long, default_value = "rk4")]
    method: String,
    #[arg(long, default_value_t = 1e-10)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct LyapunovArgs {
    /// Registered system, or `harmonic`.
    system: String,
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Horizon; 1000 when omitted.
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    renorm: f64,
    #[arg(long, env = "QUADHAM_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    paths: Vec<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::ConstraintViolated { .. }) => EXIT_CONSTRAINT,
        Some(
            Error::UnknownSystem(_)
            | Error::UnknownParameter { .. }
            | Error::UnknownTransform(_)
            | Error::UnknownReduction(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidConfig(_),
        ) => EXIT_USAGE,
        _ => 1,
    }
}

/// A usage error detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Integrate(a) => cmd_integrate(a),
        Command::Lyapunov(a) => cmd_lyapunov(a),
        Command::Report(a) => cmd_report(a),
        Command::List => {
            let list: String = systems::registry()
                .iter()
                .map(|d| format!("{:<22} {}\n", d.name, d.description))
                .collect();
            emit(None, &list)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parse_params(raw: &[String]) -> Result<Vec<(String, f64)>> {
    raw.iter()
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| usage(format!("parameter `{p}` is not of the form name=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| usage(format!("parameter `{k}` has a non-numeric value `{v}`")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut o = io::stdout().lock();
            o.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                o.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let overrides = parse_params(&a.common.params)?;
    let opts = VerifyOptions {
        samples: a.samples,
        seed: a.seed,
        tol: a.tol,
        deterministic: a.deterministic,
    };
    let report = verify_system(&a.system, &overrides, &opts)?;
    emit(a.common.out.as_deref(), &report.to_json()?)?;
    eprintln!(
        "{}: {} pass, {} mismatch-reported, {} fail",
        report.system,
        report.count(Status::Pass),
        report.count(Status::MismatchReported),
        report.count(Status::Fail)
    );
    for c in report.claims.iter().filter(|c| c.status == Status::Fail) {
        eprintln!("  FAIL {} [{}]: {:.3e} > {:.0e}", c.id, c.anchor, c.residual_max, c.tolerance);
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// Field, integrals, labels and default state of a target.
struct Target {
    field: VectorField,
    integrals: Vec<ScalarField>,
    labels: Vec<String>,
    default_state: State,
}

fn target(name: &str, overrides: &[(String, f64)]) -> Result<Target> {
    if name == "harmonic" {
        if !overrides.is_empty() {
            bail!(usage("the harmonic oscillator takes no parameters"));
        }
        let energy = ScalarField::new("E", 2, |s| 0.5 * (s.coords[0].powi(2) + s.coords[1].powi(2)))
            .with_grad(|s| s.coords.clone());
        return Ok(Target {
            field: harmonic_oscillator(),
            integrals: vec![energy],
            labels: vec!["x".into(), "y".into()],
            default_state: State::at(vec![1.0, 0.0]),
        });
    }
    let sys: System = systems::system(name, overrides)?;
    Ok(Target {
        labels: sys.chart.labels().to_vec(),
        integrals: sys.integrals.iter().map(|i| i.field.clone()).collect(),
        default_state: sys.default_state.clone(),
        field: sys.field,
    })
}

fn initial_state(t: &Target, x0: Option<Vec<f64>>, t0: f64) -> Result<State> {
    let coords = x0.unwrap_or_else(|| t.default_state.coords.clone());
    if coords.len() != t.field.dim() {
        bail!(usage(format!(
            "--x0 has {} components but `{}` has dimension {}",
            coords.len(),
            t.field.name(),
            t.field.dim()
        )));
    }
    Ok(State::new(coords, t0))
}

#[derive(Serialize)]
struct IntegrationSummary<'a> {
    system: &'a str,
    method: Method,
    t0: f64,
    t1: f64,
    samples: usize,
    steps: usize,
    rejected: usize,
    partial: bool,
    aborted: &'a Option<quadham_core::dynamics::Abort>,
    drift: Vec<quadham_core::dynamics::DriftEntry>,
}

fn cmd_integrate(a: IntegrateArgs) -> Result<ExitCode> {
    let overrides = parse_params(&a.common.params)?;
    let t = target(&a.system, &overrides)?;
    let s0 = initial_state(&t, a.x0, a.t0)?;
    let method: Method = a.method.parse()?;
    if a.t1 < a.t0 {
        bail!(usage("--t1 must not precede --t0"));
    }
    let traj = if a.t1 == a.t0 {
        single_row(&t, s0)
    } else {
        let cfg = match method {
            Method::Rk4 => IntegratorConfig::rk4(a.dt, a.t1),
            Method::Rk45 => IntegratorConfig::rk45(a.rtol, a.atol, a.t1),
            Method::Euler => IntegratorConfig::euler(a.dt, a.t1),
        }
        .with_record_every(a.record_every);
        integrate_labelled(&t.field, &s0, &cfg, &t.integrals, t.labels.clone())?
    };
    let text = match a.format {
        Format::Json => traj.to_json()?,
        Format::Csv => {
            let mut buf = Vec::new();
            traj.write_csv(&mut buf)?;
            String::from_utf8(buf)?
        }
    };
    emit(a.common.out.as_deref(), &text)?;
    let summary = IntegrationSummary {
        system: &a.system,
        method,
        t0: a.t0,
        t1: a.t1,
        samples: traj.samples.len(),
        steps: traj.steps,
        rejected: traj.rejected,
        partial: traj.is_partial(),
        aborted: &traj.aborted,
        drift: drift_report(&traj, &t.integrals),
    };
    let summary = serde_json::to_string_pretty(&summary)?;
    // The summary goes to stdout only when the trajectory went to a file.
    if a.common.out.is_some() {
        emit(None, &summary)?;
    } else {
        eprintln!("{summary}");
    }
    if traj.is_partial() {
        eprintln!("warning: integration stopped early: {:?}", traj.aborted);
    }
    Ok(ExitCode::SUCCESS)
}

fn single_row(t: &Target, s0: State) -> Trajectory {
    Trajectory {
        labels: t.labels.clone(),
        integral_names: t.integrals.iter().map(|f| f.name().to_string()).collect(),
        integral_series: t
            .integrals
            .iter()
            .map(|f| vec![if f.in_domain(&s0) { f.eval(&s0) } else { f64::NAN }])
            .collect(),
        samples: vec![s0],
        steps: 0,
        rejected: 0,
        aborted: None,
    }
}

#[derive(Serialize)]
struct LyapunovOutput {
    system: String,
    x0: Vec<f64>,
    #[serde(flatten)]
    result: LyapunovResult,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
}

fn cmd_lyapunov(a: LyapunovArgs) -> Result<ExitCode> {
    let overrides = parse_params(&a.common.params)?;
    let t = target(&a.system, &overrides)?;
    let s0 = initial_state(&t, a.x0, 0.0)?;
    let mut notes = Vec::new();
    let horizon = a.horizon.unwrap_or_else(|| {
        notes.push(format!("--T not given; default T = {DEFAULT_HORIZON} applied"));
        DEFAULT_HORIZON
    });
    let cfg = IntegratorConfig::rk4(a.dt, horizon);
    let result = lyapunov_spectrum(&t.field, &s0, &cfg, a.renorm, a.seed)?;
    let out = LyapunovOutput {
        system: a.system,
        x0: s0.coords,
        result,
        notes,
    };
    emit(a.common.out.as_deref(), &serde_json::to_string_pretty(&out)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode> {
    if a.paths.is_empty() {
        bail!(usage("report needs at least one input file"));
    }
    let reports = a
        .paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<VerificationReport>(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let merged = merge(&reports)?;
    if let Some(w) = &merged.warning {
        eprintln!("warning: {w}");
    }
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&merged)?)?;
    Ok(if merged.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
