//! Dense spectral oracle: SVD ground truth, Schatten-p norms, the closed-form
//! 2x2 SVD, and slack evaluators for trace inequalities.
//!
//! Everything here touches matrices explicitly and is never charged to a
//! query ledger; these routines are the reference the counted algorithms are
//! measured against.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("non-finite entries in {what}")]
    NonFinite { what: &'static str },
    #[error("Schatten order must be at least 1, got {p}")]
    OrderTooSmall { p: f64 },
    #[error("{op} requires a finite Schatten order")]
    InfiniteOrder { op: &'static str },
    #[error("negative singular value {value} passed to a Schatten norm")]
    NegativeSingularValue { value: f64 },
    #[error("rank {k} out of range for a matrix with min dimension {max}")]
    RankOutOfRange { k: usize, max: usize },
    #[error("matrix columns are not orthonormal (defect {defect:.3e})")]
    NotOrthonormal { defect: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },
    #[error("power exponent must be positive, got {r}")]
    NonPositiveExponent { r: f64 },
}

/// A Schatten norm order: a real `p >= 1` or the spectral norm `p = inf`.
///
/// Infinity is a distinguished value rather than a large float so the two
/// regimes never blur numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchattenP {
    Finite(f64),
    Infinite,
}

impl SchattenP {
    /// The finite order, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            SchattenP::Finite(p) => Some(p),
            SchattenP::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, SchattenP::Infinite)
    }

    fn validate(self) -> Result<(), SpectralError> {
        if let SchattenP::Finite(p) = self {
            if !(p >= 1.0) || !p.is_finite() {
                return Err(SpectralError::OrderTooSmall { p });
            }
        }
        Ok(())
    }
}

impl fmt::Display for SchattenP {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchattenP::Infinite => write!(f, "inf"),
            SchattenP::Finite(p) => {
                if p.fract() == 0.0 && p.abs() < 1e15 {
                    write!(f, "{}", *p as i64)
                } else {
                    write!(f, "{p}")
                }
            }
        }
    }
}

#[derive(Debug, Error)]
#[error("cannot parse {input:?} as a Schatten order (use a real p >= 1 or \"inf\")")]
pub struct ParseSchattenPError {
    input: String,
}

impl FromStr for SchattenP {
    type Err = ParseSchattenPError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") || t == "∞" {
            return Ok(SchattenP::Infinite);
        }
        match f64::from_str(t) {
            Ok(p) if p.is_finite() && p >= 1.0 => Ok(SchattenP::Finite(p)),
            _ => Err(ParseSchattenPError {
                input: s.to_string(),
            }),
        }
    }
}

/// Full SVD output: `A = U diag(sigma) V^T` with descending singular values.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Descending non-negative singular values, length `min(n, d)`.
    pub singular_values: Vec<f64>,
    /// `n x r` column-orthonormal left factor.
    pub left_factor: DMatrix<f64>,
    /// `d x r` column-orthonormal right factor.
    pub right_factor: DMatrix<f64>,
}

impl Spectrum {
    pub fn schatten(&self, p: SchattenP) -> Result<f64, SpectralError> {
        schatten_norm(&self.singular_values, p)
    }
}

/// Signed gap of one inequality: `slack = lhs - rhs`, orientation documented
/// at each evaluator.
#[derive(Debug, Clone, Copy)]
pub struct InequalitySlack {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl InequalitySlack {
    fn new(lhs: f64, rhs: f64) -> Self {
        InequalitySlack {
            lhs,
            rhs,
            slack: lhs - rhs,
        }
    }
}

/// Dense SVD with factors, sorted descending.
pub fn dense_svd(a: &DMatrix<f64>) -> Result<Spectrum, SpectralError> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite { what: "svd input" });
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left factor requested");
    let v_t = svd.v_t.expect("right factor requested");
    let raw: Vec<f64> = svd.singular_values.iter().copied().collect();
    // The solver returns descending values; re-sorting here makes the
    // contract independent of that behavior.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| raw[j].partial_cmp(&raw[i]).expect("finite singular values"));
    let r = raw.len();
    let mut singular_values = Vec::with_capacity(r);
    let mut left = DMatrix::zeros(u.nrows(), r);
    let mut right = DMatrix::zeros(v_t.ncols(), r);
    for (slot, &src) in order.iter().enumerate() {
        singular_values.push(raw[src]);
        left.set_column(slot, &u.column(src));
        right.set_column(slot, &v_t.row(src).transpose());
    }
    Ok(Spectrum {
        singular_values,
        left_factor: left,
        right_factor: right,
    })
}

/// `(sum_i sigma_i^p)^(1/p)`, or `sigma_1` for `p = inf`.
///
/// The largest value is factored out before exponentiation so large `p` does
/// not overflow intermediate powers.
pub fn schatten_norm(values: &[f64], p: SchattenP) -> Result<f64, SpectralError> {
    p.validate()?;
    let mut top = 0.0f64;
    for &v in values {
        if !v.is_finite() {
            return Err(SpectralError::NonFinite {
                what: "singular values",
            });
        }
        if v < 0.0 {
            return Err(SpectralError::NegativeSingularValue { value: v });
        }
        top = top.max(v);
    }
    if top == 0.0 {
        return Ok(0.0);
    }
    match p {
        SchattenP::Infinite => Ok(top),
        SchattenP::Finite(p) => {
            let sum: f64 = values.iter().map(|&v| (v / top).powf(p)).sum();
            Ok(top * sum.powf(1.0 / p))
        }
    }
}

/// `sum_i sigma_i^p` for finite `p`; the natural unit of the trace
/// inequalities. Assumes non-negative values.
pub fn schatten_power_sum(values: &[f64], p: f64) -> f64 {
    values.iter().map(|&v| v.max(0.0).powf(p)).sum()
}

/// The unachievable optimum `min_{rank <= k} ||A - X||_{S_p}`, from the tail
/// singular values.
pub fn best_rank_k_error(a: &DMatrix<f64>, k: usize, p: SchattenP) -> Result<f64, SpectralError> {
    let max = a.nrows().min(a.ncols());
    if k > max {
        return Err(SpectralError::RankOutOfRange { k, max });
    }
    let spectrum = dense_svd(a)?;
    schatten_norm(&spectrum.singular_values[k..], p)
}

/// `||A(I - ZZ^T)||_{S_p}` for a `d x k` orthonormal `Z`, via the dense
/// oracle. Always at least [`best_rank_k_error`] with `k = Z.ncols()`.
pub fn residual_cost(
    a: &DMatrix<f64>,
    z: &DMatrix<f64>,
    p: SchattenP,
) -> Result<f64, SpectralError> {
    require_orthonormal(z, 1e-8)?;
    let az = a * z;
    let residual = a - &az * z.transpose();
    let spectrum = dense_svd(&residual)?;
    schatten_norm(&spectrum.singular_values, p)
}

/// Closed-form singular values of `[[a, b], [c, d]]`, largest first.
///
/// The small value uses `|ad - bc| / sigma_1` instead of the subtractive
/// radical: `(e^2 - f^2)/4 = (ad - bc)^2` exactly, so this form has no
/// cancellation when the matrix is nearly singular.
pub fn svd_2x2(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let e = a * a + b * b + c * c + d * d;
    let f = ((a * a + b * b - c * c - d * d).powi(2) + 4.0 * (a * c + b * d).powi(2)).sqrt();
    let sigma1 = ((e + f) / 2.0).sqrt();
    let det = a * d - b * c;
    let sigma2 = if sigma1 > 0.0 { det.abs() / sigma1 } else { 0.0 };
    (sigma1, sigma2)
}

/// Pinching gap for rank-k orthogonal projections `P = PP^T`, `Q = QQ^T`:
/// `slack = ||A||_p^p - ||PAQ||_p^p - ||(I-P)A(I-Q)||_p^p`, expected >= 0.
pub fn pinching_slack(
    a: &DMatrix<f64>,
    p_basis: &DMatrix<f64>,
    q_basis: &DMatrix<f64>,
    p: f64,
) -> Result<InequalitySlack, SpectralError> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(SpectralError::OrderTooSmall { p });
    }
    require_orthonormal(p_basis, 1e-8)?;
    require_orthonormal(q_basis, 1e-8)?;
    let proj_left = p_basis * p_basis.transpose();
    let proj_right = q_basis * q_basis.transpose();
    let id_left = DMatrix::identity(a.nrows(), a.nrows());
    let id_right = DMatrix::identity(a.ncols(), a.ncols());
    let inner = &proj_left * a * &proj_right;
    let outer = (id_left - &proj_left) * a * (id_right - &proj_right);
    let whole = schatten_power_sum(&dense_svd(a)?.singular_values, p);
    let inner_pow = schatten_power_sum(&dense_svd(&inner)?.singular_values, p);
    let outer_pow = schatten_power_sum(&dense_svd(&outer)?.singular_values, p);
    Ok(InequalitySlack::new(whole, inner_pow + outer_pow))
}

/// Araki-Lieb-Thirring gap: `slack = tr((BAB)^r) - tr(B^r A^r B^r)`.
///
/// The inequality direction flips at `r = 1`: slack <= 0 for `r >= 1`,
/// slack >= 0 for `0 < r < 1`, equality at `r = 1`.
pub fn alt_slack(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: f64,
) -> Result<InequalitySlack, SpectralError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(SpectralError::NonPositiveExponent { r });
    }
    let a_eig = psd_eigen(a)?;
    let b_eig = psd_eigen(b)?;
    let a_r = eigen_power(&a_eig, r);
    let b_r = eigen_power(&b_eig, r);
    let b_mat = eigen_power(&b_eig, 1.0);
    let a_mat = eigen_power(&a_eig, 1.0);
    let bab = &b_mat * &a_mat * &b_mat;
    // BAB = (A^{1/2}B)^T (A^{1/2}B) is PSD exactly; tiny negative
    // eigenvalues are roundoff and are clamped inside the power.
    let lhs = psd_trace_power(&bab, r);
    let rhs = (&b_r * &a_r * &b_r).trace();
    Ok(InequalitySlack::new(lhs, rhs))
}

/// Symmetric eigendecomposition sorted by descending eigenvalue. Ties keep
/// the solver's output order.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| {
        raw[j]
            .partial_cmp(&raw[i])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    let mut values = Vec::with_capacity(raw.len());
    let mut vectors = DMatrix::zeros(m.nrows(), raw.len());
    for (slot, &src) in order.iter().enumerate() {
        values.push(raw[src]);
        vectors.set_column(slot, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Max-norm distance of `M^T M` from the identity.
pub fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let gram = m.tr_mul(m);
    (gram - DMatrix::identity(m.ncols(), m.ncols())).amax()
}

fn require_orthonormal(m: &DMatrix<f64>, tol: f64) -> Result<(), SpectralError> {
    let defect = orthonormality_defect(m);
    if !defect.is_finite() || defect > tol {
        return Err(SpectralError::NotOrthonormal { defect });
    }
    Ok(())
}

struct PsdEigen {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

/// Symmetrizes, rejects eigenvalues below -1e-8, clamps the rest to [0, inf).
fn psd_eigen(m: &DMatrix<f64>) -> Result<PsdEigen, SpectralError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite { what: "psd input" });
    }
    let sym = (m + m.transpose()) * 0.5;
    let (values, vectors) = symmetric_eigen_desc(&sym);
    let min_eig = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-8 {
        return Err(SpectralError::NotPsd { min_eig });
    }
    let values = values.into_iter().map(|v| v.max(0.0)).collect();
    Ok(PsdEigen { values, vectors })
}

fn eigen_power(eig: &PsdEigen, r: f64) -> DMatrix<f64> {
    let n = eig.values.len();
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        let w = eig.values[j].powf(r);
        scaled.column_mut(j).scale_mut(w);
    }
    &scaled * eig.vectors.transpose()
}

fn psd_trace_power(m: &DMatrix<f64>, r: f64) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let (values, _) = symmetric_eigen_desc(&sym);
    values.iter().map(|&v| v.max(0.0).powf(r)).sum()
}
