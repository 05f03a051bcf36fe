//! Command-line interface.
//!
//! Four subcommands: `test` evaluates the scan test at one parameter value
//! and prints a JSON report; `region` inverts the test over a parameter
//! grid into a CSV; `mc` reproduces Monte Carlo size and power tables; and
//! `critval` prints a critical value on its own.
//!
//! Exit codes: 0 for a completed run (including rejections — the verdict is
//! data, not an error), 2 for anything traceable to user input, 1 for
//! internal failures.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::critval::{
    analytic_critical_value, least_favorable_critical_value_on_data, refined_critical_value,
    simulated_critical_value, CriticalValue, CriticalValueMethod, MultiplierCovariance,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{build_hull, truncation, TruncationRule};
use crate::inversion::{invert_test, ThetaGrid};
use crate::models::{Model, Theta};
use crate::montecarlo::{power_table, size_table, DesignSpec, TableKind};
use crate::scan::{scan_statistic, ScanConfig};

#[derive(Debug, Parser)]
#[command(
    name = "cmiscan",
    version,
    about = "Multiscale rectangle-scan tests for conditional moment inequalities"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test one parameter value and print a JSON report.
    Test(TestArgs),
    /// Invert the test over a parameter grid into a confidence region CSV.
    Region(RegionArgs),
    /// Estimate size or power tables by Monte Carlo.
    Mc(McArgs),
    /// Print a critical value without running a test.
    Critval(CritvalArgs),
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Input CSV with covariate columns x1..xd and outcome bounds wl/wh.
    #[arg(long)]
    data: PathBuf,

    /// Moment model.
    #[arg(long, value_parser = Model::from_str)]
    model: Model,

    /// Parameter to test, comma-separated (intercept first).
    #[arg(long, allow_hyphen_values = true, value_parser = Theta::from_str)]
    theta: Theta,

    /// Truncation rule: fixed:V, pow:DELTA or pow-scaled:DELTA.
    #[arg(long, value_parser = TruncationRule::from_str)]
    tn: TruncationRule,

    /// Critical value engine: analytic, refined, simulated or lf.
    #[arg(long, default_value = "analytic", value_parser = CriticalValueMethod::from_str)]
    critval: CriticalValueMethod,

    /// Test level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Replications for the simulation engines.
    #[arg(long = "B", default_value_t = 2000)]
    b: usize,

    /// Seed for the simulation engines.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Candidate edges per dimension for the 2-D grid scan.
    #[arg(long, default_value_t = 64)]
    max_edges: usize,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RegionArgs {
    /// Input CSV with covariate columns x1..xd and outcome bounds wl/wh.
    #[arg(long)]
    data: PathBuf,

    /// Moment model.
    #[arg(long, value_parser = Model::from_str)]
    model: Model,

    /// Parameter grid, one min:max:steps spec per coordinate,
    /// comma-separated (e.g. "0:0.5:26,-1:1:21").
    #[arg(long, allow_hyphen_values = true, value_parser = ThetaGrid::from_str)]
    grid: ThetaGrid,

    /// Truncation rule: fixed:V, pow:DELTA or pow-scaled:DELTA.
    #[arg(long, value_parser = TruncationRule::from_str)]
    tn: TruncationRule,

    /// Critical value engine: analytic, refined, simulated or lf.
    #[arg(long, default_value = "analytic", value_parser = CriticalValueMethod::from_str)]
    critval: CriticalValueMethod,

    /// Test level; the region targets coverage 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Replications for the simulation engines.
    #[arg(long = "B", default_value_t = 2000)]
    b: usize,

    /// Seed for the simulation engines.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Candidate edges per dimension for the 2-D grid scan.
    #[arg(long, default_value_t = 64)]
    max_edges: usize,

    /// Write the region CSV here; a JSON summary then goes to stdout.
    /// Without it the CSV itself goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct McArgs {
    /// Which table to estimate.
    #[arg(long, value_parser = TableKind::from_str)]
    kind: TableKind,

    /// Data-generating design.
    #[arg(long, default_value = "1", value_parser = DesignSpec::from_str)]
    design: DesignSpec,

    /// Sample sizes, comma-separated.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 500, 1000])]
    ns: Vec<usize>,

    /// Truncation rules, comma-separated.
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = TruncationRule::from_str,
        default_values_t = [
            TruncationRule::Power(0.2),
            TruncationRule::Power(1.0 / 3.0),
            TruncationRule::Power(0.5),
        ]
    )]
    rules: Vec<TruncationRule>,

    /// Size tables: levels to estimate at, comma-separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.10, 0.05])]
    alphas: Vec<f64>,

    /// Power tables: the single test level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Power tables: intercept offsets above the boundary.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])]
    offsets: Vec<f64>,

    /// Monte Carlo replications per table cell.
    #[arg(long, default_value_t = 2000)]
    reps: usize,

    /// Replications behind the least-favorable critical value.
    #[arg(long = "B", default_value_t = 2000)]
    b: usize,

    /// Master seed; every replication derives its own substream.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Write the table CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CritvalArgs {
    /// Critical value engine: analytic, refined, simulated or lf.
    #[arg(long, default_value = "analytic", value_parser = CriticalValueMethod::from_str)]
    method: CriticalValueMethod,

    /// Test level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Truncation rule: fixed:V, pow:DELTA or pow-scaled:DELTA.
    #[arg(long, value_parser = TruncationRule::from_str)]
    tn: TruncationRule,

    /// Input CSV; required for the simulation engines, optional for the
    /// closed-form ones if --n and --vol are given instead.
    #[arg(long)]
    data: Option<PathBuf>,

    /// Sample size (closed-form engines without --data).
    #[arg(long)]
    n: Option<usize>,

    /// Support volume (closed-form engines without --data).
    #[arg(long)]
    vol: Option<f64>,

    /// Covariate dimension (closed-form engines without --data).
    #[arg(long, default_value_t = 1)]
    dx: usize,

    /// Number of moments; implied by --model when that is given.
    #[arg(long)]
    dy: Option<usize>,

    /// Moment model; required for the lf engine.
    #[arg(long, value_parser = Model::from_str)]
    model: Option<Model>,

    /// Replications for the simulation engines.
    #[arg(long = "B", default_value_t = 2000)]
    b: usize,

    /// Seed for the simulation engines.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Candidate edges per dimension for the 2-D grid scan.
    #[arg(long, default_value_t = 64)]
    max_edges: usize,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses the process arguments and runs the chosen subcommand.
pub fn run() -> Result<()> {
    run_command(Cli::parse().command)
}

fn run_command(command: Command) -> Result<()> {
    match command {
        Command::Test(args) => cmd_test(args),
        Command::Region(args) => cmd_region(args),
        Command::Mc(args) => cmd_mc(args),
        Command::Critval(args) => cmd_critval(args),
    }
}

#[derive(Debug, Serialize)]
struct TestReport<'a> {
    theta: &'a [f64],
    t: &'a [f64],
    s: f64,
    method: &'static str,
    threshold: f64,
    reject: bool,
    n: usize,
    d_x: usize,
    d_y: usize,
    t_n: f64,
    vol_hull: f64,
    cells_evaluated: u64,
    cells_skipped: u64,
    seed: u64,
}

fn cmd_test(args: TestArgs) -> Result<()> {
    let data = Dataset::from_csv_path(&args.data)?;
    let x = data.covariates();
    let n = x.n();
    let config = ScanConfig { max_edges_per_dim: args.max_edges };
    let t_n = truncation(args.tn, n, x)?;
    let vol_hull = build_hull(x)?.volume();
    let moments = args.model.moments(&data, &args.theta)?;
    let result = scan_statistic(x, &moments, t_n, &config)?;
    let cv = critical_value_for(
        args.critval,
        &data,
        args.model,
        t_n,
        vol_hull,
        args.alpha,
        args.b,
        args.seed,
        &config,
    )?;
    let report = TestReport {
        theta: args.theta.values(),
        t: &result.t,
        s: result.s,
        method: cv.method.id(),
        threshold: cv.threshold_for_s(n),
        reject: cv.rejects(result.s, n),
        n,
        d_x: x.dim(),
        d_y: args.model.d_y(),
        t_n,
        vol_hull,
        cells_evaluated: result.cells_evaluated,
        cells_skipped: result.cells_skipped,
        seed: args.seed,
    };
    write_json(&report, args.out.as_deref())
}

#[derive(Debug, Serialize)]
struct RegionSummary {
    alpha: f64,
    method: &'static str,
    threshold: f64,
    n: usize,
    t_n: f64,
    grid: String,
    points: usize,
    accepted: usize,
    projections: Vec<Option<(f64, f64)>>,
    out: String,
}

fn cmd_region(args: RegionArgs) -> Result<()> {
    let data = Dataset::from_csv_path(&args.data)?;
    let n = data.n();
    let config = ScanConfig { max_edges_per_dim: args.max_edges };
    let t_n = truncation(args.tn, n, data.covariates())?;
    let region = invert_test(
        &data,
        args.model,
        &args.grid,
        args.tn,
        args.critval,
        args.alpha,
        args.b,
        args.seed,
        &config,
    )?;
    match &args.out {
        Some(path) => {
            region.to_csv(File::create(path)?)?;
            let summary = RegionSummary {
                alpha: region.alpha,
                method: region.critical_value.method.id(),
                threshold: region.threshold,
                n,
                t_n,
                grid: args.grid.to_string(),
                points: args.grid.len(),
                accepted: region.accepted_count(),
                projections: region.projections.clone(),
                out: path.display().to_string(),
            };
            write_json(&summary, None)
        }
        None => {
            let stdout = io::stdout();
            region.to_csv(stdout.lock())?;
            Ok(())
        }
    }
}

fn cmd_mc(args: McArgs) -> Result<()> {
    let table = match args.kind {
        TableKind::Size => size_table(
            args.design,
            &args.ns,
            &args.rules,
            &args.alphas,
            args.reps,
            args.seed,
        )?,
        TableKind::Power => power_table(
            args.design,
            &args.ns,
            &args.rules,
            &args.offsets,
            args.alpha,
            args.reps,
            args.b,
            args.seed,
        )?,
    };
    match &args.out {
        Some(path) => table.to_csv(File::create(path)?),
        None => {
            let stdout = io::stdout();
            table.to_csv(stdout.lock())
        }
    }
}

#[derive(Debug, Serialize)]
struct CritvalReport {
    method: &'static str,
    alpha: f64,
    threshold: f64,
    root_n_scale: bool,
    n: usize,
    t_n: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn cmd_critval(args: CritvalArgs) -> Result<()> {
    let data = args.data.as_deref().map(Dataset::from_csv_path).transpose()?;
    let config = ScanConfig { max_edges_per_dim: args.max_edges };

    let (n, d_x, vol) = match &data {
        Some(d) => {
            let x = d.covariates();
            (x.n(), x.dim(), build_hull(x)?.volume())
        }
        None => {
            let n = args.n.ok_or_else(|| {
                Error::InvalidConfig("give either --data or --n (with --vol)".into())
            })?;
            let vol = args.vol.ok_or_else(|| {
                Error::InvalidConfig("--vol is required when --n is used instead of --data".into())
            })?;
            (n, args.dx, vol)
        }
    };
    let d_y = match (args.model, args.dy) {
        (Some(model), None) => model.d_y(),
        (None, Some(dy)) => dy,
        (None, None) => 1,
        (Some(model), Some(dy)) if model.d_y() == dy => dy,
        (Some(model), Some(dy)) => {
            return Err(Error::InvalidConfig(format!(
                "--dy {dy} contradicts --model {model} (d_y = {})",
                model.d_y()
            )))
        }
    };
    let t_n = match &data {
        Some(d) => truncation(args.tn, n, d.covariates())?,
        None => free_standing_truncation(args.tn, n)?,
    };

    let cv = match args.method {
        CriticalValueMethod::Analytic => analytic_critical_value(n, d_x, d_y, vol, t_n, args.alpha)?,
        CriticalValueMethod::Refined => refined_critical_value(n, d_x, d_y, vol, t_n, args.alpha)?,
        CriticalValueMethod::Simulated => {
            let d = data.as_ref().ok_or_else(|| {
                Error::InvalidConfig("the simulated engine needs --data".into())
            })?;
            simulated_critical_value(
                d.covariates(),
                d_y,
                t_n,
                args.alpha,
                args.b,
                args.seed,
                &MultiplierCovariance::Identity,
                &config,
            )?
        }
        CriticalValueMethod::LeastFavorable => {
            let d = data.as_ref().ok_or_else(|| {
                Error::InvalidConfig("the lf engine needs --data".into())
            })?;
            let model = args.model.ok_or_else(|| {
                Error::InvalidConfig("the lf engine needs --model".into())
            })?;
            least_favorable_critical_value_on_data(
                d.covariates(),
                model,
                t_n,
                args.alpha,
                args.b,
                args.seed,
                &config,
            )?
        }
    };
    let report = CritvalReport {
        method: cv.method.id(),
        alpha: cv.alpha,
        threshold: cv.threshold,
        root_n_scale: cv.method.root_n_scale(),
        n,
        t_n,
        b: cv.b,
        seed: cv.seed,
    };
    write_json(&report, args.out.as_deref())
}

/// Truncation without data: data-free rules only.
fn free_standing_truncation(rule: TruncationRule, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "the truncation rule needs n >= 2, got {n}"
        )));
    }
    match rule {
        TruncationRule::Fixed(v) => {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidTruncation(format!(
                    "fixed truncation must be a positive real, got {v}"
                )));
            }
            Ok(v)
        }
        TruncationRule::Power(delta) => {
            if !(delta.is_finite() && 0.0 < delta && delta < 1.0) {
                return Err(Error::InvalidTruncation(format!(
                    "power truncation exponent must lie in (0, 1), got {delta}"
                )));
            }
            Ok((n as f64).powf(-delta))
        }
        TruncationRule::PowerScaled(_) => Err(Error::InvalidConfig(
            "pow-scaled truncation depends on the covariate range; give --data".into(),
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn critical_value_for(
    method: CriticalValueMethod,
    data: &Dataset,
    model: Model,
    t_n: f64,
    vol_hull: f64,
    alpha: f64,
    b: usize,
    seed: u64,
    config: &ScanConfig,
) -> Result<CriticalValue> {
    let x = data.covariates();
    match method {
        CriticalValueMethod::Analytic => {
            analytic_critical_value(x.n(), x.dim(), model.d_y(), vol_hull, t_n, alpha)
        }
        CriticalValueMethod::Refined => {
            refined_critical_value(x.n(), x.dim(), model.d_y(), vol_hull, t_n, alpha)
        }
        CriticalValueMethod::Simulated => simulated_critical_value(
            x,
            model.d_y(),
            t_n,
            alpha,
            b,
            seed,
            &MultiplierCovariance::Identity,
            config,
        ),
        CriticalValueMethod::LeastFavorable => {
            least_favorable_critical_value_on_data(x, model, t_n, alpha, b, seed, config)
        }
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Internal(format!("report serialization failed: {e}")))?;
    buf.push(b'\n');
    match out {
        Some(path) => File::create(path)?.write_all(&buf)?,
        None => io::stdout().write_all(&buf)?,
    }
    Ok(())
}
