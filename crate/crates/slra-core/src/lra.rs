//! Schatten-p low-rank approximation in the counted query model.
//!
//! The main entry point [`schatten_lra`] runs a two-scale scheme: a narrow
//! block Krylov pass tuned for a possible spectral gap at the target rank, a
//! wide block pass tuned for flat tails, and two cheap probe runs whose Ritz
//! values decide which basis to keep. All Krylov passes run on the adjoint
//! view, so the bases live on the row side and the final output is an
//! orthonormal basis `Z` of `A^T W` for the selected `W`.
//!
//! Everything spent is visible in the operator's ledger; the residual
//! certificate, when computed, uses the uncounted dense escape hatch and
//! never perturbs the query totals.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::krylov::{block_krylov, KrylovError, KrylovParams};
use crate::linop::{apply_block, ledger_report, LedgerSnapshot, LinOpError, LinearOperator, Side};
use crate::ortho::orthonormalize;
use crate::rng::{mix, GaussianStream};
use crate::spectral::{residual_cost, SchattenP, SpectralError};

/// Residual certificates are computed automatically up to this min(n, d);
/// beyond it the dense oracle would dominate the runtime.
pub const CERTIFICATE_DENSE_LIMIT: usize = 512;

const TAG_W1: u64 = 0x6c72_6101;
const TAG_W2: u64 = 0x6c72_6102;
const TAG_PROBE_TOP: u64 = 0x6c72_6103;
const TAG_PROBE_TAIL: u64 = 0x6c72_6104;
const TAG_SPECTRAL: u64 = 0x6c72_6105;
const TAG_ZORTH: u64 = 0x6c72_6106;
const TAG_F1: u64 = 0x6c72_6108;
const TAG_F2: u64 = 0x6c72_6109;
const TAG_REP: u64 = 0x6c72_6180;

#[derive(Debug, Error)]
pub enum LraError {
    #[error("accuracy must lie strictly inside (0, 1), got {eps}")]
    BadEpsilon { eps: f64 },
    #[error("target rank {k} out of range 1..={max}")]
    BadRank { k: usize, max: usize },
    #[error("block cap {cap} is below the required minimum {need}")]
    BlockCapTooSmall { cap: usize, need: usize },
    #[error("repetitions must be at least 1")]
    ZeroRepetitions,
    #[error("schedule constant must be positive and finite, got {c}")]
    BadConstant { c: f64 },
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error(transparent)]
    LinOp(#[from] LinOpError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Per-stage multipliers applied on top of the shared schedule constant.
///
/// The probe stages only need three Rayleigh quotients at fixed relative
/// accuracy, not the full per-vector guarantee, so they run on a fraction of
/// the main schedule. The defaults keep the probes from dominating the query
/// budget while staying far above the accuracy the branch thresholds need.
#[derive(Debug, Clone, Copy)]
pub struct StageConstants {
    pub w1: f64,
    pub w2: f64,
    pub probe_top: f64,
    pub probe_tail: f64,
    pub spectral: f64,
}

impl Default for StageConstants {
    fn default() -> Self {
        StageConstants {
            w1: 1.0,
            w2: 1.0,
            probe_top: 0.125,
            probe_tail: 0.125,
            spectral: 1.0,
        }
    }
}

/// Inputs of one low-rank approximation run.
#[derive(Debug, Clone)]
pub struct LraConfig {
    pub target_rank: usize,
    pub eps: f64,
    pub p: SchattenP,
    /// Shared multiplier inside every iteration schedule.
    pub schedule_constant: f64,
    pub stage_constants: StageConstants,
    /// Upper bound on the wide block size; `None` means the dimensions are
    /// the only cap.
    pub block_cap: Option<usize>,
    /// Independent trials; more than 1 keeps the basis with the smallest
    /// residual certificate and accumulates every trial's queries.
    pub repetitions: usize,
    pub seed: u64,
}

impl LraConfig {
    pub fn new(target_rank: usize, eps: f64, p: SchattenP, seed: u64) -> Self {
        LraConfig {
            target_rank,
            eps,
            p,
            schedule_constant: crate::krylov::DEFAULT_SCHEDULE_CONSTANT,
            stage_constants: StageConstants::default(),
            block_cap: None,
            repetitions: 1,
            seed,
        }
    }
}

/// Squared singular-value estimates from the probe runs.
#[derive(Debug, Clone, Copy)]
pub struct ProbeResult {
    pub sigma1_sq_hat: f64,
    pub sigma_k1_sq_hat: f64,
    pub sigma_s_sq_hat: f64,
    pub probe_queries: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    LargeGapTop,
    SmallTailW2,
    LargeTailW1,
    SpectralFallback,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Branch::LargeGapTop => "LARGE_GAP_TOP",
            Branch::SmallTailW2 => "SMALL_TAIL_W2",
            Branch::LargeTailW1 => "LARGE_TAIL_W1",
            Branch::SpectralFallback => "SPECTRAL_FALLBACK",
        };
        f.write_str(s)
    }
}

/// The branch taken plus the threshold comparison that selected it.
#[derive(Debug, Clone)]
pub struct BranchDecision {
    pub branch: Branch,
    pub rationale: String,
}

/// Final output: basis, decision trail, query totals, optional certificate.
#[derive(Debug, Clone)]
pub struct LraOutput {
    /// `d x k` column-orthonormal basis for the row side.
    pub basis: DMatrix<f64>,
    pub decision: BranchDecision,
    /// Ledger growth over the whole run (all repetitions included).
    pub total_queries: LedgerSnapshot,
    /// `||A(I - ZZ^T)||_{S_p}` from the dense oracle, when affordable.
    pub residual_certificate: Option<f64>,
}

/// The iteration schedule a configuration induces on an `n x d` operator.
#[derive(Debug, Clone, Copy)]
pub enum SchedulePlan {
    /// `p` is infinite or larger than `ln(d)/eps`: one narrow run suffices.
    Spectral { q: usize },
    /// The two-scale path with both bases, probes, and a branch.
    TwoScale {
        gamma1: f64,
        q_w1: usize,
        s: usize,
        q_w2: usize,
        q_probe_top: usize,
        q_probe_tail: usize,
    },
}

/// Computes the full iteration schedule without touching any operator.
pub fn schedule_plan(n: usize, d: usize, cfg: &LraConfig) -> Result<SchedulePlan, LraError> {
    let c = cfg.schedule_constant;
    let k = cfg.target_rank;
    let eps = cfg.eps;
    let df = d as f64;
    let spectral_cutoff = df.ln() / eps;
    let finite_p = match cfg.p {
        SchattenP::Infinite => None,
        SchattenP::Finite(p) if p > spectral_cutoff => None,
        SchattenP::Finite(p) => Some(p),
    };
    let Some(p) = finite_p else {
        let q = ceil_at_least_one(c * cfg.stage_constants.spectral * (df / eps).ln() / eps.sqrt());
        return Ok(SchedulePlan::Spectral { q });
    };
    let cap = cfg.block_cap.unwrap_or(d);
    if cap < k + 1 {
        return Err(LraError::BlockCapTooSmall { cap, need: k + 1 });
    }
    let gamma1 = eps.powf(2.0 / 3.0) / p.cbrt();
    let q_w1 = ceil_at_least_one(
        c * cfg.stage_constants.w1 * ((df / gamma1).ln() / gamma1.sqrt() + (df / eps).ln() * p.sqrt()),
    );
    // The wide block lives on the adjoint view, so the row count caps it too.
    let s_raw = (k as f64 / (eps * p).cbrt()).ceil() as usize;
    let s = s_raw.clamp(k + 1, d.min(cap).min(n));
    let q_w2 = ceil_at_least_one(c * cfg.stage_constants.w2 * (df / eps).ln() * p.sqrt());
    let q_probe_top = ceil_at_least_one(
        c * cfg.stage_constants.probe_top * ((df * p).ln() + (df / eps).ln()) * p.sqrt(),
    );
    let q_probe_tail =
        ceil_at_least_one(c * cfg.stage_constants.probe_tail * (df / eps).ln() * p.sqrt());
    Ok(SchedulePlan::TwoScale {
        gamma1,
        q_w1,
        s,
        q_w2,
        q_probe_top,
        q_probe_tail,
    })
}

/// Two short Krylov runs on `A` itself yielding the squared estimates for
/// the 1st, (k+1)-st, and s-th singular values. `probe_queries` is the sum
/// of both runs' ledger deltas.
pub fn spectrum_probe(
    op: &LinearOperator,
    k: usize,
    s: usize,
    cfg: &LraConfig,
) -> Result<ProbeResult, LraError> {
    let p = cfg.p.finite().ok_or(SpectralError::InfiniteOrder {
        op: "spectrum_probe",
    })?;
    let c = cfg.schedule_constant;
    let df = op.cols() as f64;
    let q_top = ceil_at_least_one(
        c * cfg.stage_constants.probe_top * ((df * p).ln() + (df / cfg.eps).ln()) * p.sqrt(),
    );
    let run_top = block_krylov(
        op,
        &krylov_params(k + 1, k + 1, q_top, mix(cfg.seed, TAG_PROBE_TOP), c),
    )?;
    let q_tail =
        ceil_at_least_one(c * cfg.stage_constants.probe_tail * (df / cfg.eps).ln() * p.sqrt());
    let run_tail = block_krylov(
        op,
        &krylov_params(s, s, q_tail, mix(cfg.seed, TAG_PROBE_TAIL), c),
    )?;
    Ok(ProbeResult {
        sigma1_sq_hat: run_top.rayleigh_values[0],
        sigma_k1_sq_hat: run_top.rayleigh_values[k],
        sigma_s_sq_hat: run_tail.rayleigh_values[s - 1],
        probe_queries: run_top.queries_used.total() + run_tail.queries_used.total(),
    })
}

/// Pure threshold logic on probe estimates; thresholds are inclusive.
pub fn select_branch(probe: &ProbeResult, p: f64, k: usize, s: usize) -> BranchDecision {
    let t = 1.0 + 0.5 / p;
    let top_threshold = t * probe.sigma_k1_sq_hat;
    let tail_threshold = probe.sigma_k1_sq_hat / t;
    if probe.sigma1_sq_hat >= top_threshold {
        return BranchDecision {
            branch: Branch::LargeGapTop,
            rationale: format!(
                "sigma1_sq {:.6e} >= {:.6e} = (1+0.5/p) sigma_{}_sq: gap at the top, keeping the narrow basis",
                probe.sigma1_sq_hat,
                top_threshold,
                k + 1
            ),
        };
    }
    if probe.sigma_s_sq_hat <= tail_threshold {
        return BranchDecision {
            branch: Branch::SmallTailW2,
            rationale: format!(
                "sigma1_sq {:.6e} < {:.6e} and sigma_{}_sq {:.6e} <= {:.6e} = sigma_{}_sq/(1+0.5/p): decaying tail, keeping the wide basis",
                probe.sigma1_sq_hat,
                top_threshold,
                s,
                probe.sigma_s_sq_hat,
                tail_threshold,
                k + 1
            ),
        };
    }
    BranchDecision {
        branch: Branch::LargeTailW1,
        rationale: format!(
            "sigma1_sq {:.6e} < {:.6e} and sigma_{}_sq {:.6e} > {:.6e}: flat spectrum, the narrow basis already meets the target",
            probe.sigma1_sq_hat, top_threshold, s, probe.sigma_s_sq_hat, tail_threshold
        ),
    }
}

/// (1+eps)-approximate rank-k Schatten-p approximation; see the module
/// documentation for the stage structure.
pub fn schatten_lra(op: &LinearOperator, cfg: &LraConfig) -> Result<LraOutput, LraError> {
    validate(op, cfg)?;
    let before = ledger_report(op);
    if cfg.repetitions == 1 {
        let mut out = single_run(op, cfg, cfg.seed, false)?;
        out.total_queries = ledger_report(op).since(before);
        return Ok(out);
    }
    // Amplification keeps the smallest certificate; certificates are forced
    // on so the selection is well-defined regardless of problem size.
    let mut best: Option<LraOutput> = None;
    for rep in 0..cfg.repetitions {
        let seed = mix(cfg.seed, TAG_REP.wrapping_add(rep as u64));
        let run = single_run(op, cfg, seed, true)?;
        let run_cert = run
            .residual_certificate
            .expect("forced certificate is present");
        let better = match &best {
            None => true,
            Some(b) => run_cert < b.residual_certificate.expect("forced certificate"),
        };
        if better {
            best = Some(run);
        }
    }
    let mut chosen = best.expect("repetitions is at least 1");
    chosen.total_queries = ledger_report(op).since(before);
    Ok(chosen)
}

/// Rank-1 Frobenius sketch: a short narrow run and a wide run race, and two
/// extra counted applies pick the better of the two candidate vectors.
pub fn frobenius_rank1_sketch(
    op: &LinearOperator,
    eps: f64,
    cfg: &LraConfig,
) -> Result<DVector<f64>, LraError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LraError::BadEpsilon { eps });
    }
    let c = cfg.schedule_constant;
    if !(c > 0.0 && c.is_finite()) {
        return Err(LraError::BadConstant { c });
    }
    let n = op.rows();
    let d = op.cols();
    let iters_narrow = ceil_at_least_one(c / eps.cbrt());
    let narrow = block_krylov(
        op,
        &krylov_params(1, 1, iters_narrow, mix(cfg.seed, TAG_F1), c),
    )?;
    let wide_block = ((c / eps.cbrt()).ceil() as usize).clamp(1, d);
    let iters_wide = ceil_at_least_one(c * (n as f64 / eps).ln());
    let wide = block_krylov(
        op,
        &krylov_params(1, wide_block, iters_wide, mix(cfg.seed, TAG_F2), c),
    )?;
    let z_narrow = narrow.basis.column(0).clone_owned();
    let z_wide = wide.basis.column(0).clone_owned();
    let img_narrow = apply_block(op, &narrow.basis, Side::Normal)?;
    let img_wide = apply_block(op, &wide.basis, Side::Normal)?;
    let pick = if img_wide.column(0).norm_squared() > img_narrow.column(0).norm_squared() {
        z_wide
    } else {
        z_narrow
    };
    let norm = pick.norm();
    Ok(pick / norm)
}

/// Pass/space arithmetic for a streaming port of the algorithm; reports
/// numbers only, nothing is executed.
pub fn streaming_footprint(
    n: usize,
    d: usize,
    k: usize,
    p: f64,
    eps: f64,
    c: f64,
) -> (u64, u64) {
    let passes = (c * (d as f64 / eps).ln() * p.powf(1.0 / 6.0) / eps.cbrt()).ceil();
    let words = (c * n as f64 * k as f64 / eps.cbrt()).ceil();
    (passes.max(0.0) as u64, words.max(0.0) as u64)
}

fn validate(op: &LinearOperator, cfg: &LraConfig) -> Result<(), LraError> {
    let max = op.rows().min(op.cols());
    if cfg.target_rank == 0 || cfg.target_rank > max {
        return Err(LraError::BadRank {
            k: cfg.target_rank,
            max,
        });
    }
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
        return Err(LraError::BadEpsilon { eps: cfg.eps });
    }
    if let SchattenP::Finite(p) = cfg.p {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(SpectralError::OrderTooSmall { p }.into());
        }
    }
    let sc = &cfg.stage_constants;
    for &c in &[
        cfg.schedule_constant,
        sc.w1,
        sc.w2,
        sc.probe_top,
        sc.probe_tail,
        sc.spectral,
    ] {
        if !(c > 0.0 && c.is_finite()) {
            return Err(LraError::BadConstant { c });
        }
    }
    if cfg.repetitions == 0 {
        return Err(LraError::ZeroRepetitions);
    }
    Ok(())
}

fn single_run(
    op: &LinearOperator,
    cfg: &LraConfig,
    seed: u64,
    force_certificate: bool,
) -> Result<LraOutput, LraError> {
    let n = op.rows();
    let d = op.cols();
    let k = cfg.target_rank;
    let c = cfg.schedule_constant;
    let before = ledger_report(op);
    let (basis, decision) = if k == n.min(d) {
        saturated_rank_basis(op, seed)?
    } else {
        match schedule_plan(n, d, cfg)? {
            SchedulePlan::Spectral { q } => {
                let view = op.adjoint();
                let w = block_krylov(&view, &krylov_params(k, k, q, mix(seed, TAG_SPECTRAL), c))?;
                let z = row_space_basis(op, &w.basis, seed)?;
                let decision = BranchDecision {
                    branch: Branch::SpectralFallback,
                    rationale: format!(
                        "p {} exceeds ln(d)/eps = {:.3}: spectral-regime schedule with q = {}",
                        cfg.p,
                        (d as f64).ln() / cfg.eps,
                        q
                    ),
                };
                (z, decision)
            }
            SchedulePlan::TwoScale {
                q_w1, s, q_w2, ..
            } => {
                let p = cfg.p.finite().expect("two-scale plan implies finite p");
                let view = op.adjoint();
                let w1 = block_krylov(&view, &krylov_params(k, k, q_w1, mix(seed, TAG_W1), c))?;
                let w2 = block_krylov(&view, &krylov_params(k, s, q_w2, mix(seed, TAG_W2), c))?;
                let probe_cfg = LraConfig {
                    seed,
                    ..cfg.clone()
                };
                let probe = spectrum_probe(op, k, s, &probe_cfg)?;
                let decision = select_branch(&probe, p, k, s);
                let w = match decision.branch {
                    Branch::SmallTailW2 => &w2.basis,
                    _ => &w1.basis,
                };
                let z = row_space_basis(op, w, seed)?;
                (z, decision)
            }
        }
    };
    let total_queries = ledger_report(op).since(before);
    let residual_certificate = if force_certificate || n.min(d) <= CERTIFICATE_DENSE_LIMIT {
        let a = op.explicit_matrix();
        Some(residual_cost(&a, &basis, cfg.p)?)
    } else {
        None
    };
    Ok(LraOutput {
        basis,
        decision,
        total_queries,
        residual_certificate,
    })
}

/// `k = min(n, d)`: the answer is exact without any iteration. A square (or
/// wide-rank) target takes the identity; otherwise the whole row space is
/// extracted with `n` adjoint applies.
fn saturated_rank_basis(
    op: &LinearOperator,
    seed: u64,
) -> Result<(DMatrix<f64>, BranchDecision), LraError> {
    let n = op.rows();
    let d = op.cols();
    if d <= n {
        let decision = BranchDecision {
            branch: Branch::LargeGapTop,
            rationale: "target rank saturates the column count; the identity basis is exact"
                .to_string(),
        };
        Ok((DMatrix::identity(d, d), decision))
    } else {
        let eye = DMatrix::identity(n, n);
        let b = apply_block(op, &eye, Side::Adjoint)?;
        let mut refresh = GaussianStream::new(mix(seed, TAG_ZORTH));
        let z = orthonormalize(&b, &mut refresh);
        let decision = BranchDecision {
            branch: Branch::LargeGapTop,
            rationale: "target rank saturates the row count; a row-space basis is exact"
                .to_string(),
        };
        Ok((z, decision))
    }
}

/// `Z = orth(A^T W)`: `k` adjoint applies plus a local orthonormalization.
fn row_space_basis(
    op: &LinearOperator,
    w: &DMatrix<f64>,
    seed: u64,
) -> Result<DMatrix<f64>, LraError> {
    let b = apply_block(op, w, Side::Adjoint)?;
    let mut refresh = GaussianStream::new(mix(seed, TAG_ZORTH));
    Ok(orthonormalize(&b, &mut refresh))
}

fn krylov_params(target: usize, block: usize, iterations: usize, seed: u64, c: f64) -> KrylovParams {
    KrylovParams {
        target_rank: target,
        block_size: block,
        iterations,
        seed,
        schedule_constant: c,
    }
}

fn ceil_at_least_one(x: f64) -> usize {
    let v = x.ceil();
    if v.is_finite() && v >= 1.0 {
        v as usize
    } else {
        1
    }
}
