//! The `apfx` command line.
//!
//! Every subcommand reads one JSON config, writes plain CSV (and binary
//! ensembles) into the output directory, and maps failures to exit codes:
//! 0 ok, 1 config error, 2 numerical flag, 3 property violation.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fixpoint::{run_scheme, strong_limit_probe, SchemeResult};
use crate::operators::{
    adaptedness_sweep, apply, locality_check, AdaptednessReport, AdaptednessSetup, LocalityReport,
};
use crate::pathspace::{sample_driver, write_binary, PathEnsemble};
use crate::problems::solve_localized;
use crate::projective::CompactBox;
use crate::rng::mix;
use crate::tightness::{
    box_inputs, kolmogorov_estimate, modulus_report, tight_set_probe, uniform_continuity_probe,
    write_continuity_csv, write_modulus_csv, write_regularity_csv, write_tightness_csv, CompactSpec,
};
use crate::youngdiag::{narrow_stats, test_battery, weak_summary, DEFAULT_LADDER};

#[derive(Debug, Parser)]
#[command(name = "apfx", version, about = "Fixed points of local operators on adapted random paths")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Overrides `monte_carlo.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scheme; write levels, pairwise distances, a weak summary and the
    /// finest solution.
    Solve(CommonArgs),
    /// Run the scheme with every level's solution and the narrow-convergence
    /// and strong-limit diagnostics.
    Scheme(CommonArgs),
    /// Locality and adaptedness checks of the probe operator.
    CheckOp(CommonArgs),
    /// Tightness and uniform-continuity probes of the probe operator.
    Tightness(CommonArgs),
    /// Solve the localization ladder and record stopping nodes.
    Localize(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Solve(c)
            | Command::Scheme(c)
            | Command::CheckOp(c)
            | Command::Tightness(c)
            | Command::Localize(c) => c,
        }
    }
}

/// Outcome of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Non-convergence, non-finite output or failed consistency.
    NumericalFlag,
    PropertyViolation,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::NumericalFlag => 2,
            Status::PropertyViolation => 3,
        }
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidRange { .. }
        | Error::ZeroSteps
        | Error::Divisibility { .. }
        | Error::UnknownPreset(_)
        | Error::InvalidArgument(_)
        | Error::Format(_)
        | Error::Io(_) => 1,
        _ => 2,
    }
}

/// Parse, validate and apply the command-line overrides.
pub fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.monte_carlo.seed = seed;
    }
    if let Some(out) = &args.output {
        cfg.output_dir = out.clone();
    }
    if args.threads == Some(0) {
        return Err(Error::Config("--threads must be positive".into()));
    }
    Ok(cfg)
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: Cli) -> ExitCode {
    let args = cli.command.common().clone();
    let cfg = match load_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("apfx: {e}");
            return ExitCode::from(1);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("apfx: {e}");
            return ExitCode::from(1);
        }
    };
    let outcome = pool.install(|| match &cli.command {
        Command::Solve(_) => cmd_solve(&cfg),
        Command::Scheme(_) => cmd_scheme(&cfg),
        Command::CheckOp(_) => cmd_check_op(&cfg),
        Command::Tightness(_) => cmd_tightness(&cfg),
        Command::Localize(_) => cmd_localize(&cfg),
    });
    match outcome {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(s) => ExitCode::from(s.code()),
        Err(e) => {
            eprintln!("apfx: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn write_with(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = create(dir, name)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_ensemble(dir: &Path, name: &str, x: &PathEnsemble) -> Result<()> {
    write_with(dir, name, |w| write_binary(x, w))
}

fn prepare(cfg: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("config.json"), cfg.to_json()? + "\n")?;
    Ok(cfg.output_dir.clone())
}

fn scheme_status(res: &SchemeResult) -> Status {
    if !res.converged() {
        eprintln!("apfx: at least one level did not reach the tolerance");
        return Status::NumericalFlag;
    }
    if !res.alphas.iter().all(|a| a.is_finite()) {
        eprintln!("apfx: non-finite values in a level solution");
        return Status::NumericalFlag;
    }
    Status::Ok
}

fn scheme_for(cfg: &ExperimentConfig) -> Result<SchemeResult> {
    let problem = cfg.build_problem()?;
    let driver = cfg.driver()?;
    let x_init = cfg.initial_guess(&problem)?;
    run_scheme(&problem.h, &cfg.scheme, &driver, &x_init)
}

/// `levels.csv`, `pairwise.csv`, `summary.csv` (node moments of the finest
/// level) and `solution.bin`.
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<Status> {
    let dir = prepare(cfg)?;
    let res = scheme_for(cfg)?;
    let finest = res.alphas.last().expect("levels are nonempty");
    write_with(&dir, "levels.csv", |w| res.write_levels_csv(w))?;
    write_with(&dir, "pairwise.csv", |w| res.write_pairwise_csv(w))?;
    write_with(&dir, "summary.csv", |w| weak_summary(finest, &DEFAULT_LADDER).write_csv(w))?;
    write_ensemble(&dir, "solution.bin", finest)?;
    Ok(scheme_status(&res))
}

/// Everything from `solve` per level, plus `narrow.csv`, `settling.csv`,
/// `strong_limit.csv` and `residuals.csv`.
pub fn cmd_scheme(cfg: &ExperimentConfig) -> Result<Status> {
    let dir = prepare(cfg)?;
    let problem = cfg.build_problem()?;
    let driver = cfg.driver()?;
    let x_init = cfg.initial_guess(&problem)?;
    let res = run_scheme(&problem.h, &cfg.scheme, &driver, &x_init)?;
    res.write_dir(&dir)?;
    let finest = res.alphas.last().expect("levels are nonempty");
    write_with(&dir, "summary.csv", |w| weak_summary(finest, &DEFAULT_LADDER).write_csv(w))?;
    write_with(&dir, "residuals.csv", |w| {
        writeln!(w, "n,scenario,residual,hn_residual,iterations")?;
        for (i, level) in res.levels.iter().enumerate() {
            for m in 0..res.residuals[i].len() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    level.n(),
                    m,
                    res.residuals[i][m],
                    res.hn_residuals[i][m],
                    res.iterations[i][m]
                )?;
            }
        }
        Ok(())
    })?;
    let battery = test_battery(
        driver.grid(),
        problem.dim,
        cfg.diagnostics.battery_count,
        cfg.diagnostics.battery_seed,
    )?;
    let table = narrow_stats(&res, &driver, &battery)?;
    write_with(&dir, "narrow.csv", |w| table.write_csv(w))?;
    write_with(&dir, "settling.csv", |w| {
        writeln!(w, "functional,settled")?;
        for (name, ok) in &table.settling {
            writeln!(w, "{name},{ok}")?;
        }
        writeln!(w, "settled_fraction,{}", table.settled_fraction())?;
        Ok(())
    })?;
    if res.levels.len() >= 2 {
        let probe = strong_limit_probe(&res)?;
        write_with(&dir, "strong_limit.csv", |w| {
            writeln!(w, "n,successive,to_finest")?;
            for (i, n) in probe.levels.iter().enumerate() {
                let s = probe.successive.get(i).map_or(String::new(), |v| v.to_string());
                writeln!(w, "{n},{s},{}", probe.to_finest[i])?;
            }
            writeln!(w, "verdict,{:?},", probe.verdict)?;
            Ok(())
        })?;
    }
    Ok(scheme_status(&res))
}

fn write_locality(w: &mut impl Write, r: &LocalityReport) -> Result<()> {
    writeln!(w, "trials,passed,failed,trial,scenario,node")?;
    match &r.counterexample {
        Some((c, _)) => writeln!(w, "{},{},{},{},{},{}", r.trials, r.passed, r.failed, c.trial, c.scenario, c.node)?,
        None => writeln!(w, "{},{},{},,,", r.trials, r.passed, r.failed)?,
    }
    Ok(())
}

fn write_adaptedness(w: &mut impl Write, rows: &[AdaptednessReport]) -> Result<()> {
    writeln!(w, "k_split,trials,passed,failed,trial,scenario,node")?;
    for r in rows {
        match &r.counterexample {
            Some(c) => writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.k_split, r.trials, r.passed, r.failed, c.trial, c.scenario, c.node
            )?,
            None => writeln!(w, "{},{},{},{},,,", r.k_split, r.trials, r.passed, r.failed)?,
        }
    }
    Ok(())
}

/// `locality.csv` and `adaptedness.csv`; exit 3 on any failure.
pub fn cmd_check_op(cfg: &ExperimentConfig) -> Result<Status> {
    let dir = prepare(cfg)?;
    let (op, dim) = cfg.probe_operator()?;
    let grid = cfg.time_grid()?;
    let (m, seed) = (cfg.monte_carlo.m, cfg.monte_carlo.seed);
    let driver = cfg.driver()?;
    let x = sample_driver(grid, m, dim, mix(seed, 101))?.to_paths();
    let y = sample_driver(grid, m, dim, mix(seed, 102))?.to_paths();
    let checks = &cfg.diagnostics.check;
    let loc = locality_check(&op, &x, &y, &driver, checks.locality_trials, mix(seed, 103))?;
    write_with(&dir, "locality.csv", |w| write_locality(w, &loc))?;
    let setup = AdaptednessSetup {
        grid,
        scenarios: m,
        dim,
        driver_dim: cfg.monte_carlo.d_w,
    };
    let adapted = adaptedness_sweep(&op, &setup, checks.adaptedness_trials, mix(seed, 104))?;
    write_with(&dir, "adaptedness.csv", |w| write_adaptedness(w, &adapted))?;
    let ok = loc.all_passed() && adapted.iter().all(|r| r.all_passed());
    if !ok {
        eprintln!(
            "apfx: {} locality failures, {} adaptedness splits failed",
            loc.failed,
            adapted.iter().filter(|r| !r.all_passed()).count()
        );
        return Ok(Status::PropertyViolation);
    }
    Ok(Status::Ok)
}

/// `modulus.csv`, `regularity.csv`, `tightness.csv`, `continuity.csv`.
///
/// The compact of the tight-set probe is calibrated on outputs for an
/// independent input family and driver.
pub fn cmd_tightness(cfg: &ExperimentConfig) -> Result<Status> {
    let dir = prepare(cfg)?;
    let (op, dim) = cfg.probe_operator()?;
    let grid = cfg.time_grid()?;
    let t = &cfg.diagnostics.tightness;
    let (m, seed, d_w) = (cfg.monte_carlo.m, cfg.monte_carlo.seed, cfg.monte_carlo.d_w);
    let bx = CompactBox::uniform(grid, dim, t.box_lo, t.box_hi)?;
    let driver = cfg.driver()?;
    let y = apply(&op, &box_inputs(&bx, m, mix(seed, 201))?, &driver)?;
    if !y.is_finite() {
        eprintln!("apfx: the operator produced non-finite values");
        return Ok(Status::NumericalFlag);
    }
    let reference = apply(
        &op,
        &box_inputs(&bx, m, mix(seed, 202))?,
        &sample_driver(grid, m, d_w, mix(seed, 203))?,
    )?;
    let rows = modulus_report(&y, &t.deltas)?;
    write_with(&dir, "modulus.csv", |w| write_modulus_csv(&rows, w))?;
    let fit = kolmogorov_estimate(&y, t.pair_count, mix(seed, 204))?;
    write_with(&dir, "regularity.csv", |w| write_regularity_csv(&fit, w))?;
    let spec = CompactSpec::calibrate(&reference, &t.deltas, t.quantile)?;
    let report = tight_set_probe(&[y], &spec, t.sigma)?;
    write_with(&dir, "tightness.csv", |w| write_tightness_csv(&report, w))?;
    let cont = uniform_continuity_probe(&op, &bx, &t.rho_values, t.trials, &driver, mix(seed, 205))?;
    write_with(&dir, "continuity.csv", |w| write_continuity_csv(&cont, w))?;
    Ok(Status::Ok)
}

/// `solution.bin`, `stopping.csv` and `ladder.csv`; exit 2 when the ladder is
/// inconsistent.
pub fn cmd_localize(cfg: &ExperimentConfig) -> Result<Status> {
    let radii = match &cfg.localization {
        Some(l) => l.radii.clone(),
        None => return Err(Error::Config("`localize` needs a localization section".into())),
    };
    let dir = prepare(cfg)?;
    let problem = cfg.build_problem()?;
    let sde = problem.sde.expect("validated: localization needs a preset");
    let driver = cfg.driver()?;
    let sol = solve_localized(&sde, &radii, &driver, &cfg.scheme)?;
    write_ensemble(&dir, "solution.bin", &sol.path)?;
    write_with(&dir, "stopping.csv", |w| {
        writeln!(w, "scenario,stopping_node,exit_flag")?;
        for (m, (k, e)) in sol.stopping_nodes.iter().zip(&sol.exit_flags).enumerate() {
            writeln!(w, "{m},{k},{e}")?;
        }
        Ok(())
    })?;
    let steps = driver.grid().steps();
    write_with(&dir, "ladder.csv", |w| {
        writeln!(w, "radius,exited_fraction,mean_stopping_node")?;
        for (r, _, tau) in &sol.ladder {
            let exited = tau.iter().filter(|&&k| k < steps).count() as f64 / tau.len() as f64;
            let mean = tau.iter().sum::<usize>() as f64 / tau.len() as f64;
            writeln!(w, "{r},{exited},{mean}")?;
        }
        Ok(())
    })?;
    if !sol.consistent() {
        eprintln!("apfx: localizations disagree before the stopping node in {} scenarios", sol.inconsistent.len());
        return Ok(Status::NumericalFlag);
    }
    Ok(Status::Ok)
}
