//! The `mavdesign` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mavdesign_core::{efficient_round, evaluate_and_compare, Design, OptimizerOptions};

use crate::error::{Error, Result};
use crate::parallel::optimize_parallel;
use crate::report::{comparison_csv, mse_csv, rounding_csv, sensitivity_csv, write_text};
use crate::scenario::{
    design_json, load_design, load_design_free, load_named_design, load_scenario, write_design,
    Scenario,
};
use crate::simulation::{run_mse_study, Method, StudySpec};

#[derive(Debug, Parser)]
#[command(name = "mavdesign", version, about = "Bayesian optimal designs for model averaging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute an optimal design for a scenario.
    Optimize(OptimizeArgs),
    /// Verify a design with the sensitivity function.
    Check(CheckArgs),
    /// Compare the criterion values of several designs.
    Evaluate(EvaluateArgs),
    /// Round a design to integer replications.
    Round(RoundArgs),
    /// Monte Carlo MSE study of the averaging estimators.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, or a `.json` path for the design file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub starts: Option<usize>,
    /// Initial number of support points.
    #[arg(long)]
    pub k: Option<usize>,
    /// Exit with status 3 when the design fails verification.
    #[arg(long)]
    pub require_converged: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value_t = mavdesign_core::sensitivity::DEFAULT_GRID)]
    pub grid: usize,
    /// Tolerance relative to the criterion value.
    #[arg(long, default_value_t = mavdesign_core::sensitivity::DEFAULT_REL_TOL)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with status 3 when the check fails.
    #[arg(long)]
    pub require_pass: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub designs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoundArgs {
    #[arg(long)]
    pub design: PathBuf,
    /// Total sample size; defaults to the scenario's `n`.
    #[arg(long)]
    pub n: Option<usize>,
    /// Scenario supplying the design space and `n`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub designs: Vec<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "fixed,smooth_aic,aic_select")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Check(a) => check(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Round(a) => round(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let sc = load_scenario(path)?;
    match seed {
        Some(s) => log::info!("scenario {} sha256={} seed={s}", path.display(), sc.hash()),
        None => log::info!("scenario {} sha256={}", path.display(), sc.hash()),
    }
    Ok(sc)
}

/// Writes `content` to `out/name`, or to stdout without `--out`.
fn emit(out: Option<&Path>, name: &str, content: &str) -> Result<()> {
    match out {
        Some(dir) => {
            let path = write_text(dir.join(name), content)?;
            log::info!("wrote {}", path.display());
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn optimize(a: &OptimizeArgs) -> Result<()> {
    let sc = scenario(&a.config, Some(a.seed))?;
    let mut opts = OptimizerOptions::for_family(&sc.family);
    opts.rng_seed = a.seed;
    if let Some(s) = a.starts {
        opts.n_starts = s;
    }
    if let Some(k) = a.k {
        opts.k_init = k;
        opts.max_k = opts.max_k.max(k);
    }
    let res = optimize_parallel(&sc.problem, &opts, None)?;
    log::info!(
        "phi={} support={} converged={} evals={}",
        res.phi,
        res.design.len(),
        res.converged,
        res.evals
    );
    match &a.out {
        Some(out) => {
            let (design_path, csv_path) = if out.extension().is_some_and(|e| e == "json") {
                let stem = out.file_stem().unwrap_or_default().to_string_lossy();
                (out.clone(), out.with_file_name(format!("{stem}_sensitivity.csv")))
            } else {
                (out.join("design.json"), out.join("sensitivity.csv"))
            };
            write_design(&design_path, &res.design)?;
            write_text(&csv_path, &sensitivity_csv(&res.sensitivity))?;
            println!(
                "phi={} support={} converged={} design={}",
                res.phi,
                res.design.len(),
                res.converged,
                design_path.display()
            );
        }
        None => print!("{}", design_json(&res.design)),
    }
    if a.require_converged && !res.converged {
        return Err(Error::Verification(format!(
            "max d_pi violation {:e} exceeds {:e}",
            res.sensitivity.max_violation, res.sensitivity.tol
        )));
    }
    Ok(())
}

fn check(a: &CheckArgs) -> Result<()> {
    if !(a.tol >= 0.0) {
        return Err(Error::invalid("--tol must be nonnegative"));
    }
    let sc = scenario(&a.config, None)?;
    let design = load_design(&a.design, &sc.space)?;
    let report = sc.problem.check_optimality_rel(&design, a.grid, a.tol)?;
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    let worst_support = report
        .support_residuals
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    let summary = format!(
        "{verdict} phi={} max_violation={:e} max_support_residual={:e} tol={:e}",
        report.phi, report.max_violation, worst_support, report.tol
    );
    log::info!("{summary}");
    emit(a.out.as_deref(), "sensitivity.csv", &sensitivity_csv(&report))?;
    if a.out.is_some() {
        println!("{summary}");
    }
    if a.require_pass && !report.passed {
        return Err(Error::Verification(summary));
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let sc = scenario(&a.config, None)?;
    let named = a
        .designs
        .iter()
        .map(|p| load_named_design(p, &sc.space))
        .collect::<Result<Vec<_>>>()?;
    let designs: Vec<Design> = named.iter().map(|d| d.design.clone()).collect();
    let names: Vec<String> = named.iter().map(|d| d.name.clone()).collect();
    let rows = evaluate_and_compare(&sc.problem, &designs);
    for r in &rows {
        match &r.phi {
            Ok(phi) => log::info!("{}: phi={phi} efficiency={:?}", names[r.index], r.efficiency),
            Err(e) => log::warn!("{}: {e}", names[r.index]),
        }
    }
    emit(a.out.as_deref(), "comparison.csv", &comparison_csv(&names, &rows))
}

fn round(a: &RoundArgs) -> Result<()> {
    let (design, default_n) = match &a.config {
        Some(c) => {
            let sc = scenario(c, None)?;
            (load_design(&a.design, &sc.space)?, Some(sc.spec.n))
        }
        None => (load_design_free(&a.design)?, None),
    };
    let n = a
        .n
        .or(default_n)
        .ok_or_else(|| Error::invalid("--n is required without --config"))?;
    let counts = efficient_round(&design, n)?;
    log::info!("n={n} counts={counts:?}");
    emit(a.out.as_deref(), "rounding.csv", &rounding_csv(&design, &counts))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let sc = scenario(&a.config, Some(a.seed))?;
    let methods = a
        .methods
        .iter()
        .filter(|m| !m.trim().is_empty())
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>>>()?;
    if sc.truths.is_empty() {
        return Err(Error::invalid(format!(
            "{}: the scenario lists no truths to simulate from",
            a.config.display()
        )));
    }
    let designs = a
        .designs
        .iter()
        .map(|p| load_named_design(p, &sc.space))
        .collect::<Result<Vec<_>>>()?;
    let rows = run_mse_study(&StudySpec {
        scenario: &sc,
        designs: &designs,
        methods: &methods,
        truths: &sc.truths,
        reps: a.reps,
        seed: a.seed,
        threads: None,
    })?;
    for r in &rows {
        log::info!(
            "{} {} {}: mse={} invalid={} nonconverged={}",
            r.design,
            r.method,
            r.truth_id,
            r.mse,
            r.n_invalid,
            r.n_nonconverged
        );
    }
    emit(a.out.as_deref(), "mse.csv", &mse_csv(&rows))
}
