//! Command-line experiment driver.
//!
//! Every subcommand reads the same config format (`--config PATH`) and
//! writes CSV (or JSON with `--json`) to stdout or `--out`. Exit
//! codes: 0 success, 2 config or input error, 3 numerical failure,
//! 4 failed acceptance check.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process;

use clap::{Parser, Subcommand};

use dualquant::core::DistributionSpec;
use dualquant::dq::DistortionReport;
use dualquant::error::{Error, Result};
use dualquant::harness::config::{load_experiment_config, ExperimentConfig, ExperimentKind};
use dualquant::harness::csvout::{
    comparison_csv, grid_points_text, pierce_csv, rate_scan_csv, to_json,
};
use dualquant::harness::{
    check_qdq_bound, run_comparison, run_distortion, run_fp_eval, run_optimize, run_pierce_scan,
    run_rate_scan, FpEvalReport, QdqBoundReport,
};
use dualquant::optimize::OptimizationResult;

#[derive(Parser)]
#[command(
    name = "dualquant",
    version,
    about = "Dual quantization experiments: local error evaluation, distortion scans, \
             grid optimization, and random-quantization bounds.",
    after_help = "Exit codes: 0 success, 2 config/input error, 3 numerical failure, \
                  4 failed check."
)]
struct Cli {
    /// Experiment config file (key = value lines with [sections]).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the config's RNG seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Override the config's Monte Carlo sample count.
    #[arg(long, global = true, value_name = "N")]
    samples: Option<usize>,

    /// Write output to this file instead of the config's `out` target
    /// (default: stdout).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Emit JSON instead of CSV / text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the local error at the configured site, with the full
    /// optimality certificate.
    FpEval,
    /// Estimate the distortion of a single grid.
    Distortion,
    /// Measure each grid in the configured family; one CSV row per
    /// size.
    RateScan,
    /// Paired dual / extended / nearest-neighbor comparison rows.
    Compare,
    /// Random-quantization error scan over grid sizes.
    PierceScan,
    /// Optimize the configured initial grid.
    Optimize,
    /// Run a lattice rate scan for the uniform law and test the
    /// normalized estimates against the closed-form coefficient bound.
    CheckQdqBound,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::FpEval => ExperimentKind::FpEval,
            Command::Distortion => ExperimentKind::Distortion,
            Command::RateScan => ExperimentKind::RateScan,
            Command::Compare => ExperimentKind::Compare,
            Command::PierceScan => ExperimentKind::PierceScan,
            Command::Optimize => ExperimentKind::Optimize,
            Command::CheckQdqBound => ExperimentKind::CheckQdqBound,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            process::exit(exit_code(&e));
        }
    }
}

/// 2 for anything the user can fix in the config or inputs, 3 for
/// genuine numerical breakdown.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericalFailure(_) | Error::Diverged { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<i32> {
    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = load_experiment_config(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = cli.samples {
        cfg.samples = samples;
    }
    if let Some(out) = cli.out {
        cfg.out = Some(out);
    }
    if cli.json {
        cfg.json = true;
    }
    let kind = cli.command.kind();
    if let Some(declared) = cfg.experiment {
        if declared != kind {
            return Err(Error::Config(format!(
                "config declares experiment '{declared}' but the subcommand is '{kind}'"
            )));
        }
    }

    let mut exit = 0;
    let output = match kind {
        ExperimentKind::RateScan => {
            let rows = run_rate_scan(&cfg)?;
            if cfg.json {
                to_json(&rows)?
            } else {
                rate_scan_csv(&rows)
            }
        }
        ExperimentKind::Compare => {
            let rows = run_comparison(&cfg)?;
            if cfg.json {
                to_json(&rows)?
            } else {
                comparison_csv(&rows)
            }
        }
        ExperimentKind::PierceScan => {
            let scan = run_pierce_scan(&cfg)?;
            if scan.moment_warning {
                eprintln!(
                    "warning: the pilot moment estimate is unstable; the configured \
                     (p + eta)-moment may be infinite"
                );
            }
            if cfg.json {
                to_json(&scan.rows)?
            } else {
                pierce_csv(&scan.rows)
            }
        }
        ExperimentKind::Distortion => {
            let report = run_distortion(&cfg)?;
            if cfg.json {
                to_json(&report)?
            } else {
                distortion_text(&report)
            }
        }
        ExperimentKind::FpEval => {
            let report = run_fp_eval(&cfg)?;
            if cfg.json {
                to_json(&report)?
            } else {
                fp_eval_text(&report)
            }
        }
        ExperimentKind::Optimize => {
            let result = run_optimize(&cfg)?;
            if cfg.json {
                to_json(&result)?
            } else {
                optimize_text(&result)
            }
        }
        ExperimentKind::CheckQdqBound => {
            require_unit_cube(&cfg)?;
            let r = cfg.norm.exponent().unwrap_or(f64::INFINITY);
            // Fail the hypothesis before paying for the scan.
            if !(r <= cfg.p) {
                return Err(Error::HypothesisViolation { r, p: cfg.p });
            }
            let rows = run_rate_scan(&cfg)?;
            let d = rows.first().map_or(1, |row| row.d);
            let report = check_qdq_bound(d, r, cfg.p, &rows)?;
            if !report.pass {
                exit = 4;
            }
            if cfg.json {
                to_json(&report)?
            } else {
                bound_text(&report)
            }
        }
    };
    write_output(cfg.out.as_deref(), &output)?;
    Ok(exit)
}

/// The coefficient bound compares against the closed-form constant for
/// the uniform law on a unit cube, so the check refuses other setups.
fn require_unit_cube(cfg: &ExperimentConfig) -> Result<()> {
    match &cfg.distribution {
        Some(DistributionSpec::UniformCube { edge, .. }) if (*edge - 1.0).abs() <= 1e-12 => Ok(()),
        _ => Err(Error::Config(
            "check-qdq-bound needs [distribution] kind = uniform_cube with edge = 1 \
             (the bound constant is specific to the uniform law on a unit cube)"
                .into(),
        )),
    }
}

fn distortion_text(report: &DistortionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "estimate_p = {}", report.estimate_p);
    let _ = writeln!(out, "std_error_p = {}", report.std_error_p);
    let _ = writeln!(out, "estimate = {}", report.root_estimate());
    let _ = writeln!(out, "std_error = {}", report.root_std_error());
    let _ = writeln!(out, "samples = {}", report.samples);
    let _ = writeln!(out, "extended = {}", report.extended);
    let _ = writeln!(out, "nn_fraction = {}", report.nn_fraction);
    let _ = writeln!(out, "p = {}", report.p);
    let _ = writeln!(out, "norm = {}", report.norm);
    out
}

fn fp_eval_text(report: &FpEvalReport) -> String {
    let join = |xs: &[f64]| {
        xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
    };
    let mut out = String::new();
    let _ = writeln!(out, "site = {}", join(&report.site));
    let _ = writeln!(out, "p = {}", report.p);
    let _ = writeln!(out, "norm = {}", report.norm);
    let _ = writeln!(out, "extended = {}", report.extended);
    let _ = writeln!(out, "branch = {}", report.branch);
    let _ = writeln!(out, "value_p = {}", report.value_p);
    let _ = writeln!(out, "value = {}", report.value);
    if !report.support.is_empty() {
        let support =
            report.support.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "support = {support}");
        let _ = writeln!(out, "weights = {}", join(&report.weights));
        let _ = writeln!(out, "weighted_mean = {}", join(&report.weighted_mean));
    }
    if let Some(i) = report.nearest_index {
        let _ = writeln!(out, "nearest_index = {i}");
    }
    out
}

/// Optimizer output doubles as a grid file: `#` summary comments, then
/// one point per line, ready for `[grid] kind = file`.
fn optimize_text(result: &OptimizationResult) -> String {
    let report = &result.final_report;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# optimized grid: n = {}, estimate_p = {}, estimate = {}, std_error = {}",
        result.grid.size(),
        report.estimate_p,
        report.root_estimate(),
        report.root_std_error()
    );
    let _ = writeln!(
        out,
        "# objective trajectory: {} -> {} over {} recorded points",
        result.trajectory.first().copied().unwrap_or(f64::NAN),
        result.trajectory.last().copied().unwrap_or(f64::NAN),
        result.trajectory.len()
    );
    out.push_str(&grid_points_text(&result.grid));
    out
}

fn bound_text(report: &QdqBoundReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "empirical_q = {}", report.empirical_q);
    let _ = writeln!(out, "bound = {}", report.bound);
    let _ = writeln!(out, "pass = {}", report.pass);
    out
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, content).map_err(|e| Error::io(p.display().to_string(), e))
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
