//! One function per subcommand. Everything here returns `anyhow::Result` so
//! the binary can map failures onto its exit codes in one place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;

use slra_core::hardness::{hardness_experiment, HardnessConfig};
use slra_core::krylov::DEFAULT_SCHEDULE_CONSTANT;
use slra_core::lra::{schatten_lra, LraConfig};
use slra_core::matfile::read_matrix_auto;
use slra_core::rng::mix;
use slra_core::spectral::{best_rank_k_error, residual_cost, SchattenP};
use slra_core::verify::{run_all, run_suite, SuiteReport};

use crate::bench::{
    run_bench, DENSE_ORACLE_LIMIT, HARDNESS_COLUMNS, HARDNESS_SCHEMA, LRA_COLUMNS, LRA_SCHEMA,
};
use crate::plan::{BenchPlan, RunConfig};

/// Seed used when neither a flag nor a config file sets one. The `SLRA_SEED`
/// environment variable overrides this default only; explicit seeds win.
pub const DEFAULT_SEED: u64 = 7;

pub fn default_seed() -> Result<u64> {
    match std::env::var("SLRA_SEED") {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map_err(|_| anyhow!("SLRA_SEED must be an unsigned integer, got `{raw}`")),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_SEED),
        Err(e) => Err(anyhow!("reading SLRA_SEED: {e}")),
    }
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>> {
    match out {
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("creating `{}`", path.display()))?;
            Ok(Box::new(file))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Flags for the single-run subcommand, before merging with `--config`.
#[derive(Debug, Clone, Default)]
pub struct LraArgs {
    pub matrix: PathBuf,
    pub k: Option<usize>,
    pub eps: Option<f64>,
    pub p: Option<SchattenP>,
    pub seed: Option<u64>,
    pub c: Option<f64>,
    pub repetitions: Option<usize>,
    pub block_cap: Option<usize>,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Runs the solver once on a matrix file and writes a one-row CSV.
pub fn cmd_lra(args: &LraArgs) -> Result<()> {
    let file_cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading `{}`", path.display()))?;
            RunConfig::parse(&text, &path.display().to_string())?
        }
        None => RunConfig::default(),
    };

    let k = args
        .k
        .or(file_cfg.k)
        .ok_or_else(|| anyhow!("missing rank: pass --k or set `k` in --config"))?;
    let eps = args
        .eps
        .or(file_cfg.eps)
        .ok_or_else(|| anyhow!("missing accuracy: pass --eps or set `eps` in --config"))?;
    let p = args
        .p
        .or(file_cfg.p)
        .ok_or_else(|| anyhow!("missing norm order: pass --p or set `p` in --config"))?;
    let seed = match args.seed.or(file_cfg.seed) {
        Some(s) => s,
        None => default_seed()?,
    };

    let op = read_matrix_auto(&args.matrix)?;
    let (n, d) = (op.rows(), op.cols());

    let mut cfg = LraConfig::new(k, eps, p, seed);
    cfg.schedule_constant = args.c.or(file_cfg.c).unwrap_or(DEFAULT_SCHEDULE_CONSTANT);
    if let Some(reps) = args.repetitions.or(file_cfg.repetitions) {
        cfg.repetitions = reps;
    }
    cfg.block_cap = args.block_cap.or(file_cfg.block_cap);

    let run = schatten_lra(&op, &cfg)?;

    let oracle = (n.min(d) <= DENSE_ORACLE_LIMIT).then(|| op.explicit_matrix());
    let residual = run.residual_certificate.or_else(|| {
        oracle
            .as_ref()
            .and_then(|a| residual_cost(a, &run.basis, p).ok())
    });
    let optimum = oracle
        .as_ref()
        .and_then(|a| best_rank_k_error(a, k, p).ok());
    let ratio = match (residual, optimum) {
        (Some(r), Some(o)) if o > 0.0 => Some(r / o),
        _ => None,
    };

    let instance = args
        .matrix
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| args.matrix.display().to_string());

    let mut out = open_out(args.out.as_deref())?;
    writeln!(out, "{LRA_SCHEMA}")?;
    writeln!(out, "{LRA_COLUMNS}")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        instance.replace([',', '"', '\n', '\r'], ";"),
        n,
        d,
        k,
        p,
        eps,
        run.decision.branch,
        run.total_queries.applies,
        run.total_queries.adjoint_applies,
        fmt_opt(residual),
        fmt_opt(optimum),
        fmt_opt(ratio),
    )?;
    Ok(())
}

/// Runs the benchmark sweep described by a plan file.
pub fn cmd_bench(plan_path: &Path, out_path: &Path) -> Result<()> {
    let text = fs::read_to_string(plan_path)
        .with_context(|| format!("reading `{}`", plan_path.display()))?;
    let plan = BenchPlan::parse(&text, &plan_path.display().to_string())?;
    let mut out = open_out(Some(out_path))?;
    run_bench(&plan, default_seed()?, &mut out)
}

/// Repeats the minimum-eigenvalue reduction and writes one row per trial.
pub fn cmd_hardness(n: usize, p: f64, trials: usize, out_path: Option<&Path>) -> Result<()> {
    let base_seed = default_seed()?;
    let mut reports: Vec<(usize, slra_core::hardness::HardnessReport)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let cfg = HardnessConfig::new(mix(base_seed, trial as u64));
            hardness_experiment(n, p, &cfg).map(|report| (trial, report))
        })
        .collect::<Result<_, _>>()?;
    reports.sort_by_key(|(trial, _)| *trial);

    let mut out = open_out(out_path)?;
    writeln!(out, "{HARDNESS_SCHEMA}")?;
    writeln!(out, "{HARDNESS_COLUMNS}")?;
    for (trial, report) in &reports {
        let ratio = match (report.residual, report.optimum) {
            (Some(r), o) if o > 0.0 => Some(r / o),
            _ => None,
        };
        writeln!(
            out,
            "{},{},{},1,{},{},{},{},{},{},{},{},{},{},{}",
            format_args!("wishart-n{n}-t{trial}"),
            report.dimension,
            report.dimension,
            SchattenP::Finite(report.p),
            report.eps,
            report.lra_branch,
            report.queries_used.applies,
            report.queries_used.adjoint_applies,
            fmt_opt(report.residual),
            report.optimum,
            fmt_opt(ratio),
            report.lambda_min_true,
            report.lambda_hat,
            report.abs_error,
        )?;
    }
    Ok(())
}

fn print_report(report: &SuiteReport) {
    let status = if !report.passed() {
        "FAIL"
    } else if report.note.is_empty() {
        "PASS"
    } else {
        "PASS (no trials)"
    };
    println!(
        "suite {}: trials={} failures={} worst_slack={:e} tolerance={:e} {}",
        report.name, report.trials, report.failures, report.worst_slack, report.tolerance, status
    );
}

/// Runs one property suite or all of them. `Ok(true)` means every suite
/// passed; an unknown suite name is an error, not a failed run.
pub fn cmd_verify(suite: &str, trials: usize, seed: u64) -> Result<bool> {
    let reports = if suite == "all" {
        run_all(trials, seed)?
    } else {
        vec![run_suite(suite, trials, seed)?]
    };
    for report in &reports {
        print_report(report);
    }
    let failures: usize = reports.iter().map(|r| r.failures).sum();
    let failed_suites = reports.iter().filter(|r| !r.passed()).count();
    println!(
        "verify: {} suites, {} trial failures, {} suites failed",
        reports.len(),
        failures,
        failed_suites
    );
    Ok(failed_suites == 0)
}
