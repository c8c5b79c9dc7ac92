//! Block Krylov iteration over a counted operator, plus the iteration-count
//! schedules that drive it.
//!
//! One run charges exactly `s + 2sq` matrix-vector products: `s` adjoint
//! applies forming the seed block `A^T U`, then `s` normal plus `s` adjoint
//! applies per round. The Krylov basis is built block-by-block with full
//! reorthogonalization instead of materializing the raw Krylov matrix, which
//! in floating point is hopelessly ill-conditioned at the schedules used
//! here. Columns that lose rank during reorthogonalization are refreshed
//! with seeded Gaussian draws so the block width, and with it the query
//! count, never varies with the input's conditioning.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linop::{apply_block, ledger_report, LedgerSnapshot, LinOpError, LinearOperator, Side};
use crate::ortho::{coordinate_completion, orthonormalize, orthonormalize_against};
use crate::rng::{gaussian_matrix, mix, GaussianStream};
use crate::spectral::{dense_svd, orthonormality_defect, symmetric_eigen_desc, SpectralError};

/// Default multiplier applied inside every iteration schedule.
pub const DEFAULT_SCHEDULE_CONSTANT: f64 = 4.0;

/// Ritz values below this times the largest are reported as exact zeros.
const RANK_RTOL: f64 = 1e-12;

const TAG_START: u64 = 0x6b72_796c_1;
const TAG_REFRESH: u64 = 0x6b72_796c_2;

#[derive(Debug, Error)]
pub enum KrylovError {
    #[error("target rank must be at least 1")]
    ZeroRank,
    #[error("block size {s} must lie between the target rank {k} and the column count {d}")]
    BlockSize { s: usize, k: usize, d: usize },
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("accuracy must lie in (0, 1], got {gamma}")]
    BadAccuracy { gamma: f64 },
    #[error("schedule constant must be positive and finite, got {c}")]
    BadConstant { c: f64 },
    #[error("gap schedule requires sigma_high > sigma_low >= 0, got {high} and {low}")]
    NoGap { high: f64, low: f64 },
    #[error("start block must be {d}x{s}, got {rows}x{cols}")]
    StartShape {
        rows: usize,
        cols: usize,
        d: usize,
        s: usize,
    },
    #[error("warm start spans {span} columns, exceeding the column count {d}")]
    WarmSpanTooLarge { span: usize, d: usize },
    #[error(transparent)]
    LinOp(#[from] LinOpError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Inputs of one Krylov run.
#[derive(Debug, Clone, Copy)]
pub struct KrylovParams {
    pub target_rank: usize,
    pub block_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub schedule_constant: f64,
}

impl KrylovParams {
    pub fn new(target_rank: usize, block_size: usize, iterations: usize, seed: u64) -> Self {
        KrylovParams {
            target_rank,
            block_size,
            iterations,
            seed,
            schedule_constant: DEFAULT_SCHEDULE_CONSTANT,
        }
    }

    fn validate(&self, d: usize) -> Result<(), KrylovError> {
        if self.target_rank == 0 {
            return Err(KrylovError::ZeroRank);
        }
        if self.block_size < self.target_rank || self.block_size > d {
            return Err(KrylovError::BlockSize {
                s: self.block_size,
                k: self.target_rank,
                d,
            });
        }
        if self.iterations == 0 {
            return Err(KrylovError::ZeroIterations);
        }
        Ok(())
    }
}

/// Output of one Krylov run.
#[derive(Debug, Clone)]
pub struct SubspaceResult {
    /// `d x k` column-orthonormal basis.
    pub basis: DMatrix<f64>,
    /// `||A Z_i||^2` per basis column, descending. These are the Ritz values
    /// of `A^T A` on the returned subspace, so no extra queries are spent.
    pub rayleigh_values: Vec<f64>,
    /// Ledger growth of the underlying operator during this run. For an
    /// adjoint view the sides are reported from the base operator's
    /// perspective.
    pub queries_used: LedgerSnapshot,
}

/// `q = ceil(c ln(d / gamma) / sqrt(gamma))`, at least 1. Accuracy-driven,
/// no spectral-gap knowledge required.
pub fn gap_independent_schedule(d: usize, gamma: f64, c: f64) -> Result<usize, KrylovError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(KrylovError::BadAccuracy { gamma });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(KrylovError::BadConstant { c });
    }
    let q = (c * (d as f64 / gamma).ln() / gamma.sqrt()).ceil();
    Ok((q.max(1.0)) as usize)
}

/// `q = ceil(c ln(n / gamma) sqrt(sigma_high / (sigma_high - sigma_low)))`,
/// at least 1. Diagnostic only; the production schedules never assume a gap.
pub fn gap_dependent_schedule(
    n: usize,
    gamma: f64,
    sigma_high: f64,
    sigma_low: f64,
    c: f64,
) -> Result<usize, KrylovError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(KrylovError::BadAccuracy { gamma });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(KrylovError::BadConstant { c });
    }
    if !(sigma_high > sigma_low && sigma_low >= 0.0) || !sigma_high.is_finite() {
        return Err(KrylovError::NoGap {
            high: sigma_high,
            low: sigma_low,
        });
    }
    let factor = (sigma_high / (sigma_high - sigma_low)).sqrt();
    let q = (c * (n as f64 / gamma).ln() * factor).ceil();
    Ok((q.max(1.0)) as usize)
}

/// Block Krylov iteration on an `n x d` operator.
///
/// Draws a Gaussian `n x s` seed block `U`, forms `B_0 = A^T U`, and expands
/// the Krylov space block-by-block. The returned basis holds the top-`k`
/// Ritz directions of `A^T A` restricted to the space spanned so far.
///
/// When `s (q+1) >= d` the Krylov span is generically all of `R^d`, so the
/// run switches to a dense fallback: the operator is extracted column by
/// column (`d` normal applies, never more than the Krylov budget) and the
/// top-`k` right singular directions are returned exactly.
pub fn block_krylov(op: &LinearOperator, params: &KrylovParams) -> Result<SubspaceResult, KrylovError> {
    let d = op.cols();
    params.validate(d)?;
    let (k, s, q) = (params.target_rank, params.block_size, params.iterations);
    if s * (q + 1) >= d {
        return dense_fallback(op, k);
    }
    let before = ledger_report(op);
    let u = gaussian_matrix(mix(params.seed, TAG_START), op.rows(), s);
    let b0 = apply_block(op, &u, Side::Adjoint)?;
    let mut refresh = GaussianStream::new(mix(params.seed, TAG_REFRESH));
    let q0 = orthonormalize(&b0, &mut refresh);
    let (z, rayleigh) = expand_and_extract(op, q0, k, s, q, &mut refresh)?;
    let queries_used = ledger_report(op).since(before);
    Ok(SubspaceResult {
        basis: z,
        rayleigh_values: rayleigh,
        queries_used,
    })
}

/// Krylov iteration warm-started from a given `d x s` block instead of a
/// Gaussian seed. Charges exactly `2sq` queries: the seed block is free.
///
/// Requires `s q <= d` so the expanded basis fits; callers clamp their
/// refinement length accordingly.
pub fn block_krylov_with_start(
    op: &LinearOperator,
    params: &KrylovParams,
    start: &DMatrix<f64>,
) -> Result<SubspaceResult, KrylovError> {
    let d = op.cols();
    params.validate(d)?;
    let (k, s, q) = (params.target_rank, params.block_size, params.iterations);
    if start.nrows() != d || start.ncols() != s {
        return Err(KrylovError::StartShape {
            rows: start.nrows(),
            cols: start.ncols(),
            d,
            s,
        });
    }
    if s * q > d {
        return Err(KrylovError::WarmSpanTooLarge { span: s * q, d });
    }
    let before = ledger_report(op);
    let mut refresh = GaussianStream::new(mix(params.seed, TAG_REFRESH));
    let q0 = orthonormalize(start, &mut refresh);
    let (z, rayleigh) = expand_and_extract(op, q0, k, s, q, &mut refresh)?;
    let queries_used = ledger_report(op).since(before);
    Ok(SubspaceResult {
        basis: z,
        rayleigh_values: rayleigh,
        queries_used,
    })
}

/// Diagnostic gap `sigma_i^2(A) - ||A z_i||^2` per column of `Z`; needs the
/// dense matrix.
pub fn per_vector_errors(a: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Vec<f64>, SpectralError> {
    let defect = orthonormality_defect(z);
    if !defect.is_finite() || defect > 1e-8 {
        return Err(SpectralError::NotOrthonormal { defect });
    }
    let spectrum = dense_svd(a)?;
    let az = a * z;
    let mut out = Vec::with_capacity(z.ncols());
    for i in 0..z.ncols() {
        let sigma = spectrum.singular_values.get(i).copied().unwrap_or(0.0);
        out.push(sigma * sigma - az.column(i).norm_squared());
    }
    Ok(out)
}

/// Flips eigenvector signs so the entry of largest magnitude (first on ties)
/// is positive. Eigen solvers fix vectors only up to sign; pinning it keeps
/// runs deterministic and invariant under positive rescaling of the input.
pub(crate) fn canonicalize_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..m.nrows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[(best, j)] < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
}

/// Runs `q` rounds from an orthonormal `d x s` start, then extracts the
/// top-`k` Ritz directions. The final round's adjoint product is charged but
/// its block is not appended: closing the Gram matrix on a span one block
/// wider would need `s` more normal applies than the budget holds.
fn expand_and_extract(
    op: &LinearOperator,
    q0: DMatrix<f64>,
    k: usize,
    s: usize,
    q: usize,
    refresh: &mut GaussianStream,
) -> Result<(DMatrix<f64>, Vec<f64>), KrylovError> {
    let d = op.cols();
    let n = op.rows();
    let mut basis = DMatrix::zeros(d, s * q);
    basis.columns_mut(0, s).copy_from(&q0);
    let mut images = DMatrix::zeros(n, s * q);
    let mut latest = q0;
    for round in 1..=q {
        let w = apply_block(op, &latest, Side::Normal)?;
        images.columns_mut((round - 1) * s, s).copy_from(&w);
        let v = apply_block(op, &w, Side::Adjoint)?;
        if round < q {
            let prior = basis.columns(0, round * s).clone_owned();
            let next = orthonormalize_against(&prior, &v, refresh);
            basis.columns_mut(round * s, s).copy_from(&next);
            latest = next;
        }
    }
    Ok(ritz_top_k(&basis, &images, k))
}

/// Rayleigh-Ritz on span(P) using the cached images `F = A P`: eigenpairs of
/// `F^T F` give the Ritz directions, and the eigenvalues are exactly
/// `||A Z_i||^2` for the returned columns.
fn ritz_top_k(p: &DMatrix<f64>, f: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let gram = f.tr_mul(f);
    let gram = (&gram + gram.transpose()) * 0.5;
    let (values, vectors) = symmetric_eigen_desc(&gram);
    let mut y = vectors.columns(0, k).clone_owned();
    canonicalize_column_signs(&mut y);
    let z = p * y;
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = RANK_RTOL * top;
    let rayleigh = values
        .iter()
        .take(k)
        .map(|&v| if v <= floor { 0.0 } else { v })
        .collect();
    (z, rayleigh)
}

/// Extracts the operator with `d` normal applies and answers exactly.
fn dense_fallback(op: &LinearOperator, k: usize) -> Result<SubspaceResult, KrylovError> {
    let d = op.cols();
    let before = ledger_report(op);
    let eye = DMatrix::identity(d, d);
    let a = apply_block(op, &eye, Side::Normal)?;
    let spectrum = dense_svd(&a)?;
    let available = spectrum.singular_values.len().min(k);
    let mut partial = spectrum.right_factor.columns(0, available).clone_owned();
    canonicalize_column_signs(&mut partial);
    let basis = if available < k {
        coordinate_completion(&partial, k)
    } else {
        partial
    };
    let top = spectrum.singular_values.first().copied().unwrap_or(0.0);
    let floor = RANK_RTOL * top;
    let mut rayleigh = Vec::with_capacity(k);
    for i in 0..k {
        let sigma = spectrum.singular_values.get(i).copied().unwrap_or(0.0);
        let sigma = if sigma <= floor { 0.0 } else { sigma };
        rayleigh.push(sigma * sigma);
    }
    let queries_used = ledger_report(op).since(before);
    Ok(SubspaceResult {
        basis,
        rayleigh_values: rayleigh,
        queries_used,
    })
}
