//! Benchmark sweeps: every (k, p, eps) cell of a plan runs the two-scale
//! solver and a single-schedule Krylov baseline on the same seeded instances,
//! and the results land in one CSV file.
//!
//! Rows are written in a fixed order (cell index, then trial, then method)
//! no matter how the worker pool interleaves the runs, so two invocations of
//! the same plan differ only in the `wall_ms` column.

use std::io::Write;
use std::time::Instant;

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;

use slra_core::krylov::{block_krylov, KrylovParams};
use slra_core::linop::{LedgerSnapshot, LinearOperator, Side};
use slra_core::lra::{schatten_lra, LraConfig};
use slra_core::matfile::read_matrix_auto;
use slra_core::rng::{mix, random_orthonormal};
use slra_core::spectral::{best_rank_k_error, residual_cost, schatten_norm, SchattenP};
use slra_core::{hardness, matfile};

use crate::plan::{BenchPlan, InstanceSpec};

/// First line of every benchmark CSV; bump when the column set changes.
pub const BENCH_SCHEMA: &str = "# slra-bench-v1";
pub const BENCH_COLUMNS: &str = "instance,n,d,k,p,eps,seed,method,branch,applies,\
adjoint_applies,total,residual,optimum,ratio,wall_ms,errors";

pub const LRA_SCHEMA: &str = "# slra-lra-v1";
pub const LRA_COLUMNS: &str =
    "instance,n,d,k,p,eps,branch,applies,adjoint_applies,residual,optimum,ratio";

pub const HARDNESS_SCHEMA: &str = "# slra-hardness-v1";
pub const HARDNESS_COLUMNS: &str = "instance,n,d,k,p,eps,branch,applies,adjoint_applies,\
residual,optimum,ratio,lambda_min_true,lambda_hat,abs_error";

/// Largest `min(n, d)` for which result rows get exact residual and optimum
/// columns from the dense oracle. Above it the columns stay blank unless the
/// instance has an analytic spectrum.
pub const DENSE_ORACLE_LIMIT: usize = 600;

const TAG_BENCH: u64 = 0x424e_4348;
const TAG_INSTANCE: u64 = 1;
const TAG_OURS: u64 = 2;
const TAG_BASELINE: u64 = 3;

/// One CSV line of a sweep.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub instance: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub p: SchattenP,
    pub eps: f64,
    pub seed: u64,
    pub method: &'static str,
    pub branch: String,
    pub queries: LedgerSnapshot,
    pub residual: Option<f64>,
    pub optimum: Option<f64>,
    pub ratio: Option<f64>,
    pub wall_ms: u128,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            sanitize_field(&self.instance),
            self.n,
            self.d,
            self.k,
            self.p,
            self.eps,
            self.seed,
            self.method,
            self.branch,
            self.queries.applies,
            self.queries.adjoint_applies,
            self.queries.total(),
            fmt_opt(self.residual),
            fmt_opt(self.optimum),
            fmt_opt(self.ratio),
            self.wall_ms,
            self.error.as_deref().map(sanitize_field).unwrap_or_default(),
        )
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// CSV fields stay unquoted, so separators and newlines inside free text are
/// flattened to semicolons.
fn sanitize_field(s: &str) -> String {
    s.replace([',', '"', '\n', '\r'], ";")
}

/// Splits CSV text into data rows, skipping `#` lines and the column header.
pub fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .skip(1)
        .map(|line| line.split(',').map(str::to_string).collect())
        .collect()
}

/// Singular values `i^-alpha`, largest first.
pub fn power_law_sigma(count: usize, alpha: f64) -> Vec<f64> {
    (1..=count).map(|i| (i as f64).powf(-alpha)).collect()
}

/// Dense `n x d` matrix with the power-law spectrum and random seeded
/// orthonormal factors.
pub fn power_law_matrix(seed: u64, n: usize, d: usize, alpha: f64) -> DMatrix<f64> {
    let r = n.min(d);
    let u = random_orthonormal(mix(seed, 1), n, r);
    let v = random_orthonormal(mix(seed, 2), d, r);
    let sigma = power_law_sigma(r, alpha);
    let mut scaled = u;
    for (j, s) in sigma.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    scaled * v.transpose()
}

/// What the sweep knows about an instance beyond its operator interface.
/// Everything here is oracle-side and never touches the query ledger.
struct OracleInfo {
    explicit: Option<DMatrix<f64>>,
    known_sigma: Option<Vec<f64>>,
}

impl OracleInfo {
    fn optimum(&self, k: usize, p: SchattenP) -> Option<f64> {
        if let Some(sigma) = &self.known_sigma {
            let tail = if k >= sigma.len() { &[][..] } else { &sigma[k..] };
            return schatten_norm(tail, p).ok();
        }
        self.explicit
            .as_ref()
            .and_then(|a| best_rank_k_error(a, k, p).ok())
    }

    /// Residual of a basis. The certificate from the solver takes precedence
    /// upstream; this covers baseline rows and large analytic instances.
    fn residual(&self, op: &LinearOperator, z: &DMatrix<f64>, p: SchattenP) -> Option<f64> {
        if let Some(a) = &self.explicit {
            return residual_cost(a, z, p).ok();
        }
        // Frobenius splits over the projector, so p = 2 needs only ||A||_F
        // (analytic) and ||AZ||_F (a few uncounted applies).
        if let (SchattenP::Finite(p_val), Some(sigma)) = (p, &self.known_sigma) {
            if p_val == 2.0 {
                let total: f64 = sigma.iter().map(|s| s * s).sum();
                let az = op.apply_block_uncounted(z, Side::Normal);
                let captured: f64 = az.iter().map(|v| v * v).sum();
                return Some((total - captured).max(0.0).sqrt());
            }
        }
        None
    }
}

fn ratio_of(residual: Option<f64>, optimum: Option<f64>) -> Option<f64> {
    match (residual, optimum) {
        (Some(r), Some(o)) if o > 0.0 => Some(r / o),
        _ => None,
    }
}

/// Builds the operator and its oracle view for one trial.
fn build_instance(
    spec: &InstanceSpec,
    shared: Option<&DMatrix<f64>>,
    n: usize,
    d: usize,
    instance_seed: u64,
) -> Result<(LinearOperator, OracleInfo)> {
    let small = n.min(d) <= DENSE_ORACLE_LIMIT;
    match spec {
        InstanceSpec::PowerLaw { alpha } => {
            let a = power_law_matrix(instance_seed, n, d, *alpha);
            let oracle = OracleInfo {
                explicit: small.then(|| a.clone()),
                known_sigma: Some(power_law_sigma(n.min(d), *alpha)),
            };
            Ok((LinearOperator::dense(a)?, oracle))
        }
        InstanceSpec::PowerLawDiag { alpha } => {
            let sigma = power_law_sigma(d, *alpha);
            let op = LinearOperator::diagonal(nalgebra::DVector::from_vec(sigma.clone()))?;
            let oracle = OracleInfo {
                explicit: small.then(|| op.explicit_matrix()),
                known_sigma: Some(sigma),
            };
            Ok((op, oracle))
        }
        InstanceSpec::Wishart => {
            let op = hardness::hard_instance(n, instance_seed)?;
            let oracle = OracleInfo {
                explicit: small.then(|| op.explicit_matrix()),
                known_sigma: None,
            };
            Ok((op, oracle))
        }
        InstanceSpec::DenseFile(_) | InstanceSpec::MatrixMarketFile(_) => {
            let a = shared.expect("file instance resolved before the sweep").clone();
            let oracle = OracleInfo {
                explicit: small.then(|| a.clone()),
                known_sigma: None,
            };
            Ok((LinearOperator::dense(a)?, oracle))
        }
    }
}

/// `q = ceil(c ln(d) / sqrt(eps))`, at least 1: the one-shot schedule the
/// sweep compares against.
pub fn baseline_iterations(d: usize, eps: f64, c: f64) -> usize {
    ((c * (d as f64).ln() / eps.sqrt()).ceil() as usize).max(1)
}

struct CellSpec {
    cell_idx: usize,
    k: usize,
    p: SchattenP,
    eps: f64,
}

/// Runs a full plan and writes the versioned CSV to `out`.
pub fn run_bench(plan: &BenchPlan, base_seed: u64, out: &mut dyn Write) -> Result<()> {
    let shared: Option<DMatrix<f64>> = match &plan.instance {
        InstanceSpec::DenseFile(path) => Some(
            read_matrix_auto(path)
                .map(|op| op.explicit_matrix())
                .with_context(|| format!("reading `{}`", path.display()))?,
        ),
        InstanceSpec::MatrixMarketFile(path) => Some(
            matfile::read_matrix(path, matfile::MatrixFormat::MatrixMarket)
                .map(|op| op.explicit_matrix())
                .with_context(|| format!("reading `{}`", path.display()))?,
        ),
        _ => None,
    };
    let (n, d) = match &shared {
        Some(m) => (m.nrows(), m.ncols()),
        None => {
            let n = plan.n.expect("plan validation filled synthetic shape");
            (n, plan.d.unwrap_or(n))
        }
    };
    let label = plan.instance.label(n, d);

    let mut cells = Vec::new();
    for &k in &plan.ks {
        for &p in &plan.ps {
            for &eps in &plan.epss {
                cells.push(CellSpec {
                    cell_idx: cells.len(),
                    k,
                    p,
                    eps,
                });
            }
        }
    }

    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .flat_map(|cell| (0..plan.seeds).map(move |trial| (cell.cell_idx, trial)))
        .collect();

    let sweep_seed = mix(base_seed, TAG_BENCH);
    let mut rows: Vec<(usize, usize, usize, BenchRow)> = jobs
        .par_iter()
        .flat_map(|&(cell_idx, trial)| {
            let cell = &cells[cell_idx];
            let trial_seed = mix(mix(sweep_seed, cell_idx as u64), trial as u64);
            let pair = run_trial(plan, shared.as_ref(), &label, n, d, cell, trial_seed);
            vec![
                (cell_idx, trial, 0, pair.0),
                (cell_idx, trial, 1, pair.1),
            ]
        })
        .collect();
    rows.sort_by_key(|(cell, trial, method, _)| (*cell, *trial, *method));

    writeln!(out, "{BENCH_SCHEMA}")?;
    writeln!(out, "{BENCH_COLUMNS}")?;
    for (_, _, _, row) in &rows {
        writeln!(out, "{}", row.to_csv())?;
    }
    Ok(())
}

/// Both methods on one seeded instance: the returned pair is (ours, baseline).
fn run_trial(
    plan: &BenchPlan,
    shared: Option<&DMatrix<f64>>,
    label: &str,
    n: usize,
    d: usize,
    cell: &CellSpec,
    trial_seed: u64,
) -> (BenchRow, BenchRow) {
    let template = BenchRow {
        instance: label.to_string(),
        n,
        d,
        k: cell.k,
        p: cell.p,
        eps: cell.eps,
        seed: trial_seed,
        method: "ours",
        branch: String::new(),
        queries: LedgerSnapshot::default(),
        residual: None,
        optimum: None,
        ratio: None,
        wall_ms: 0,
        error: None,
    };

    let instance_seed = mix(trial_seed, TAG_INSTANCE);
    let (op, oracle) = match build_instance(&plan.instance, shared, n, d, instance_seed) {
        Ok(pair) => pair,
        Err(e) => {
            let mut ours = template.clone();
            ours.error = Some(format!("instance: {e}"));
            let mut baseline = ours.clone();
            baseline.method = "baseline";
            return (ours, baseline);
        }
    };
    let optimum = oracle.optimum(cell.k, cell.p);

    let mut ours = template.clone();
    let mut cfg = LraConfig::new(cell.k, cell.eps, cell.p, mix(trial_seed, TAG_OURS));
    cfg.schedule_constant = plan.c;
    let start = Instant::now();
    match schatten_lra(&op, &cfg) {
        Ok(run) => {
            ours.wall_ms = start.elapsed().as_millis();
            ours.branch = run.decision.branch.to_string();
            ours.queries = run.total_queries;
            ours.residual = run
                .residual_certificate
                .or_else(|| oracle.residual(&op, &run.basis, cell.p));
            ours.optimum = optimum;
            ours.ratio = ratio_of(ours.residual, ours.optimum);
        }
        Err(e) => {
            ours.wall_ms = start.elapsed().as_millis();
            ours.error = Some(e.to_string());
        }
    }

    let mut baseline = template;
    baseline.method = "baseline";
    let q = baseline_iterations(d, cell.eps, plan.c);
    let params = KrylovParams::new(cell.k, cell.k, q, mix(trial_seed, TAG_BASELINE));
    let base_op = op.with_fresh_ledger();
    let start = Instant::now();
    match block_krylov(&base_op, &params) {
        Ok(run) => {
            baseline.wall_ms = start.elapsed().as_millis();
            baseline.queries = run.queries_used;
            baseline.residual = oracle.residual(&base_op, &run.basis, cell.p);
            baseline.optimum = optimum;
            baseline.ratio = ratio_of(baseline.residual, baseline.optimum);
        }
        Err(e) => {
            baseline.wall_ms = start.elapsed().as_millis();
            baseline.error = Some(e.to_string());
        }
    }

    (ours, baseline)
}
