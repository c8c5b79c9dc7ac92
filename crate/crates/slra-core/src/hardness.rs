//! Lower-bound experiment kit: Wishart sampling, the `I - W/5` hard
//! instance, the one-query minimum-eigenvalue estimator, and the end-to-end
//! reduction experiment connecting rank-1 approximation quality to
//! eigenvalue estimation error.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::krylov::{block_krylov_with_start, KrylovError, KrylovParams, DEFAULT_SCHEDULE_CONSTANT};
use crate::linop::{apply, ledger_report, LedgerSnapshot, LinOpError, LinearOperator, Side};
use crate::lra::{schatten_lra, Branch, LraConfig, LraError};
use crate::rng::{gaussian_matrix, mix};
use crate::spectral::{
    schatten_norm, schatten_power_sum, symmetric_eigen_desc, SchattenP, SpectralError,
};

const TAG_WISHART: u64 = 0x6864_6e01;
const TAG_LRA: u64 = 0x6864_6e02;
const TAG_REFINE: u64 = 0x6864_6e03;

#[derive(Debug, Error)]
pub enum HardnessError {
    #[error("dimension must be at least 1")]
    BadDimension,
    #[error("estimator requires p >= 1, got {p}")]
    BadOrder { p: f64 },
    #[error("estimator requires a unit vector, got norm {norm}")]
    NonUnitVector { norm: f64 },
    #[error("calibration must be positive and finite, got {calibration}")]
    BadCalibration { calibration: f64 },
    #[error(transparent)]
    Lra(#[from] LraError),
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error(transparent)]
    LinOp(#[from] LinOpError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// One draw `W = X X^T` with `X_{ij} ~ N(0, 1/n)`.
#[derive(Debug, Clone)]
pub struct WishartInstance {
    pub dimension: usize,
    /// Exactly symmetric PSD matrix `X X^T`.
    pub matrix: DMatrix<f64>,
    /// The sampled factor, kept so tests can inject or verify draws.
    pub factor: DMatrix<f64>,
    pub seed: u64,
}

/// Settings of [`hardness_experiment`].
#[derive(Debug, Clone)]
pub struct HardnessConfig {
    pub seed: u64,
    pub schedule_constant: f64,
    /// The induced accuracy is `eps = min(calibration / n^3, 0.5)`.
    pub calibration: f64,
}

impl HardnessConfig {
    pub fn new(seed: u64) -> Self {
        HardnessConfig {
            seed,
            schedule_constant: DEFAULT_SCHEDULE_CONSTANT,
            calibration: 1.0,
        }
    }
}

/// Everything one experiment trial measures.
#[derive(Debug, Clone)]
pub struct HardnessReport {
    pub dimension: usize,
    pub p: f64,
    /// Accuracy induced by the dimension calibration.
    pub eps: f64,
    /// Smallest eigenvalue of `W` from the dense eigensolver.
    pub lambda_min_true: f64,
    pub lambda_hat: f64,
    pub abs_error: f64,
    pub opnorm_w: f64,
    /// Set on the rare draws where `||W||_op > 5` and the instance's
    /// spectrum leaves `[0, 1]`.
    pub opnorm_exceeds_bound: bool,
    /// `||A - A_1||_p^p` for `A = I - W/5` (p-th power, not the norm).
    pub schatten_tail_p: f64,
    pub lra_branch: Branch,
    /// Schatten-p residual certificate of the rank-1 basis, when computed.
    pub residual: Option<f64>,
    /// Best possible rank-1 Schatten-p residual, from the dense spectrum.
    pub optimum: f64,
    pub queries_used: LedgerSnapshot,
}

/// Samples a Wishart matrix. The product is mirrored across the diagonal so
/// symmetry holds exactly, not merely to rounding.
pub fn sample_wishart(n: usize, seed: u64) -> WishartInstance {
    assert!(n >= 1, "Wishart dimension must be at least 1");
    let scale = 1.0 / (n as f64).sqrt();
    let mut x = gaussian_matrix(mix(seed, TAG_WISHART), n, n);
    x *= scale;
    let mut w = &x * x.transpose();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = w[(i, j)];
            w[(j, i)] = v;
        }
    }
    WishartInstance {
        dimension: n,
        matrix: w,
        factor: x,
        seed,
    }
}

/// The hard instance `A = I - W/5` as a counted dense operator.
pub fn hard_instance(n: usize, seed: u64) -> Result<LinearOperator, HardnessError> {
    hard_instance_from(&sample_wishart(n, seed))
}

/// Same construction from an existing (possibly injected) Wishart draw.
pub fn hard_instance_from(instance: &WishartInstance) -> Result<LinearOperator, HardnessError> {
    let n = instance.dimension;
    let mut a = &instance.matrix * (-0.2);
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    Ok(LinearOperator::dense(a)?)
}

/// `lambda_hat = (5/p)(1 - ||A v||_2^p)` for a unit `v`; exactly one counted
/// normal apply.
pub fn min_eig_estimate(
    op: &LinearOperator,
    v: &DVector<f64>,
    p: f64,
) -> Result<f64, HardnessError> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(HardnessError::BadOrder { p });
    }
    let norm = v.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-8 {
        return Err(HardnessError::NonUnitVector { norm });
    }
    let av = apply(op, v, Side::Normal)?;
    Ok((5.0 / p) * (1.0 - av.norm().powf(p)))
}

/// Schatten power sums of `A = I - W/5` for `p = 1, 2, 3` from traces of
/// `W`, `W^2`, and `W^3` alone, with no eigendecomposition.
///
/// The `p = 2` identity is unconditional. The `p = 1` and `p = 3` identities
/// read `|1 - lambda/5|` as `1 - lambda/5` and therefore require
/// `||W||_op <= 5`; the caller is responsible for checking that event.
pub fn hard_instance_power_sums(w: &DMatrix<f64>) -> (f64, f64, f64) {
    let n = w.nrows() as f64;
    let tr1 = w.trace();
    let tr2: f64 = w.iter().map(|v| v * v).sum();
    let w2 = w * w;
    let tr3: f64 = w2.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
    let p1 = n - tr1 / 5.0;
    let p2 = n - 2.0 * tr1 / 5.0 + tr2 / 25.0;
    let p3 = n - 3.0 * tr1 / 5.0 + 3.0 * tr2 / 25.0 - tr3 / 125.0;
    (p1, p2, p3)
}

/// One full reduction trial: sample the hard instance, solve rank-1 LRA,
/// refine the vector with a warm-started Krylov run, estimate the minimum
/// eigenvalue with one more query, and compare against dense ground truth.
pub fn hardness_experiment(
    n: usize,
    p: f64,
    cfg: &HardnessConfig,
) -> Result<HardnessReport, HardnessError> {
    if n == 0 {
        return Err(HardnessError::BadDimension);
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(HardnessError::BadOrder { p });
    }
    if !(cfg.calibration > 0.0) || !cfg.calibration.is_finite() {
        return Err(HardnessError::BadCalibration {
            calibration: cfg.calibration,
        });
    }
    let c = cfg.schedule_constant;
    let eps = (cfg.calibration / (n as f64).powi(3)).min(0.5);
    let instance = sample_wishart(n, cfg.seed);
    let op = hard_instance_from(&instance)?;

    let mut lra_cfg = LraConfig::new(1, eps, SchattenP::Finite(p), mix(cfg.seed, TAG_LRA));
    lra_cfg.schedule_constant = c;
    let out = schatten_lra(&op, &lra_cfg)?;

    // Refinement: keep iterating from the returned vector before estimating.
    // The warm span must fit inside R^n, which caps the extra rounds at n.
    let q_extra = ((1.0 / (c * eps.cbrt())).ceil() as usize).clamp(1, n);
    let refine_params = KrylovParams {
        target_rank: 1,
        block_size: 1,
        iterations: q_extra,
        seed: mix(cfg.seed, TAG_REFINE),
        schedule_constant: c,
    };
    let refined = block_krylov_with_start(&op, &refine_params, &out.basis)?;
    let v = refined.basis.column(0).clone_owned();
    let lambda_hat = min_eig_estimate(&op, &v, p)?;

    // Dense ground truth; none of this touches the ledger.
    let (eigs, _) = symmetric_eigen_desc(&instance.matrix);
    let opnorm_w = eigs.first().copied().unwrap_or(0.0).max(0.0);
    let lambda_min_true = eigs.last().copied().unwrap_or(0.0).max(0.0);
    let mut sigmas: Vec<f64> = eigs.iter().map(|&l| (1.0 - l / 5.0).abs()).collect();
    sigmas.sort_by(|a, b| b.partial_cmp(a).expect("finite spectrum"));
    let schatten_tail_p = schatten_power_sum(&sigmas[1..], p);
    let optimum = schatten_norm(&sigmas[1..], SchattenP::Finite(p))?;

    Ok(HardnessReport {
        dimension: n,
        p,
        eps,
        lambda_min_true,
        lambda_hat,
        abs_error: (lambda_hat - lambda_min_true).abs(),
        opnorm_w,
        opnorm_exceeds_bound: opnorm_w > 5.0,
        schatten_tail_p,
        lra_branch: out.decision.branch,
        residual: out.residual_certificate,
        optimum,
        queries_used: ledger_report(&op),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wishart_is_exactly_symmetric_and_matches_factor() {
        let inst = sample_wishart(25, 7);
        for i in 0..25 {
            for j in 0..25 {
                assert_eq!(inst.matrix[(i, j)], inst.matrix[(j, i)]);
            }
        }
        let prod = &inst.factor * inst.factor.transpose();
        assert!((&inst.matrix - prod).amax() < 1e-12);
    }

    #[test]
    fn zero_wishart_gives_identity_instance() {
        let inst = WishartInstance {
            dimension: 4,
            matrix: DMatrix::zeros(4, 4),
            factor: DMatrix::zeros(4, 4),
            seed: 0,
        };
        let op = hard_instance_from(&inst).unwrap();
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let out = apply(&op, &v, Side::Normal).unwrap();
        assert_eq!(out, v);
        let est = min_eig_estimate(&op, &v, 3.0).unwrap();
        assert!(est.abs() < 1e-14);
    }

    #[test]
    fn estimator_is_exact_for_p_one_on_the_top_eigenvector() {
        // Diagonal W: the minimum eigenvalue direction of W is e_3, which is
        // the top singular direction of A = I - W/5.
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.25]));
        let inst = WishartInstance {
            dimension: 3,
            matrix: w,
            factor: DMatrix::zeros(3, 3),
            seed: 0,
        };
        let op = hard_instance_from(&inst).unwrap();
        let v = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let est = min_eig_estimate(&op, &v, 1.0).unwrap();
        assert!((est - 0.25).abs() < 1e-12);
    }

    #[test]
    fn power_sum_identities_match_eigenvalues() {
        let inst = sample_wishart(20, 11);
        let (p1, p2, p3) = hard_instance_power_sums(&inst.matrix);
        let (eigs, _) = symmetric_eigen_desc(&inst.matrix);
        // n = 20 draws essentially never reach opnorm 5, so the signed
        // identities apply.
        assert!(eigs[0] < 5.0);
        let direct =
            |p: f64| -> f64 { eigs.iter().map(|&l| (1.0 - l / 5.0).abs().powf(p)).sum() };
        assert!((p1 - direct(1.0)).abs() < 1e-9);
        assert!((p2 - direct(2.0)).abs() < 1e-9);
        assert!((p3 - direct(3.0)).abs() < 1e-9);
    }
}
