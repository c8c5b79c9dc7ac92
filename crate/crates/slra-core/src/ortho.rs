//! Block orthonormalization for the Krylov iterations.
//!
//! Columns are processed one at a time with classical Gram-Schmidt applied
//! twice (CGS2), which is numerically equivalent to a modified scheme but
//! keeps the projections as dense GEMV calls.
//!
//! A column whose norm drops by more than a factor of 1e10 during projection
//! carries no new direction at working precision. Such a column is replaced
//! by a fresh draw from a deterministic Gaussian continuation stream so the
//! output always has exactly as many columns as the input. Keeping the block
//! width fixed is what keeps the query schedule of the callers exact; in
//! exact arithmetic the replacement never fires on a full-rank iteration.

use nalgebra::{DMatrix, DVector};

use crate::rng::GaussianStream;

/// Relative norm drop below which a projected column counts as collapsed.
const COLLAPSE_RTOL: f64 = 1e-10;

/// Gaussian redraw attempts per collapsed column before the coordinate sweep.
const MAX_REDRAWS: usize = 8;

/// Orthonormalizes `block` against the orthonormal `basis` and within itself.
///
/// Returns a matrix with orthonormal columns, the same width as `block`,
/// orthogonal to every column of `basis`. `basis` may have zero columns.
/// Collapsed columns are replaced from `refresh`; the caller must guarantee
/// `basis.ncols() + block.ncols() <= rows` so replacements can always exist.
pub(crate) fn orthonormalize_against(
    basis: &DMatrix<f64>,
    block: &DMatrix<f64>,
    refresh: &mut GaussianStream,
) -> DMatrix<f64> {
    let rows = block.nrows();
    assert_eq!(basis.nrows(), rows, "basis/block row mismatch");
    assert!(
        basis.ncols() + block.ncols() <= rows,
        "requested basis extension exceeds the ambient dimension"
    );
    let mut out = DMatrix::zeros(rows, block.ncols());
    for j in 0..block.ncols() {
        let candidate = block.column(j).clone_owned();
        let accepted = match purify(basis, &out, j, candidate) {
            Some(v) => v,
            None => replacement_column(basis, &out, j, refresh),
        };
        out.set_column(j, &accepted);
    }
    out
}

/// Orthonormalizes the columns of `block` with no prior basis.
pub(crate) fn orthonormalize(block: &DMatrix<f64>, refresh: &mut GaussianStream) -> DMatrix<f64> {
    let empty = DMatrix::zeros(block.nrows(), 0);
    orthonormalize_against(&empty, block, refresh)
}

/// Two projection passes against `basis` and the first `taken` columns of
/// `partial`. Returns the normalized survivor, or `None` on collapse.
fn purify(
    basis: &DMatrix<f64>,
    partial: &DMatrix<f64>,
    taken: usize,
    mut v: DVector<f64>,
) -> Option<DVector<f64>> {
    let pre = v.norm();
    for _ in 0..2 {
        if basis.ncols() > 0 {
            let coeffs = basis.tr_mul(&v);
            v -= basis * coeffs;
        }
        if taken > 0 {
            let head = partial.columns(0, taken);
            let coeffs = head.tr_mul(&v);
            v -= head * coeffs;
        }
        let norm = v.norm();
        if !norm.is_finite() || norm <= COLLAPSE_RTOL * pre {
            return None;
        }
    }
    let norm = v.norm();
    Some(v / norm)
}

fn replacement_column(
    basis: &DMatrix<f64>,
    partial: &DMatrix<f64>,
    taken: usize,
    refresh: &mut GaussianStream,
) -> DVector<f64> {
    let rows = basis.nrows();
    for _ in 0..MAX_REDRAWS {
        let draw = refresh.matrix(rows, 1).column(0).clone_owned();
        if let Some(v) = purify(basis, partial, taken, draw) {
            return v;
        }
    }
    // A Gaussian draw collapses with probability zero unless the span is
    // nearly complete; the coordinate sweep settles the remaining cases.
    for i in 0..rows {
        let mut e = DVector::zeros(rows);
        e[i] = 1.0;
        if let Some(v) = purify(basis, partial, taken, e) {
            return v;
        }
    }
    unreachable!("no unit vector orthogonal to a basis of deficient size");
}

/// Extends `partial` (orthonormal columns) to `want_total` columns by
/// orthonormalizing coordinate vectors. Deterministic; no randomness.
pub(crate) fn coordinate_completion(partial: &DMatrix<f64>, want_total: usize) -> DMatrix<f64> {
    let rows = partial.nrows();
    assert!(want_total <= rows, "cannot exceed the ambient dimension");
    assert!(partial.ncols() <= want_total);
    let mut out = DMatrix::zeros(rows, want_total);
    out.columns_mut(0, partial.ncols()).copy_from(partial);
    let empty = DMatrix::zeros(rows, 0);
    let mut taken = partial.ncols();
    let mut next_coord = 0usize;
    while taken < want_total {
        let mut found = None;
        while next_coord < rows {
            let mut e = DVector::zeros(rows);
            e[next_coord] = 1.0;
            next_coord += 1;
            if let Some(v) = purify(&empty, &out, taken, e) {
                found = Some(v);
                break;
            }
        }
        let v = found.expect("coordinate sweep exhausted below the ambient dimension");
        out.set_column(taken, &v);
        taken += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianStream;

    fn ortho_defect(m: &DMatrix<f64>) -> f64 {
        let gram = m.tr_mul(m);
        (&gram - DMatrix::identity(m.ncols(), m.ncols())).amax()
    }

    #[test]
    fn full_rank_block_is_untouched_by_replacement() {
        let mut refresh = GaussianStream::new(11);
        let block = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0]);
        let q = orthonormalize(&block, &mut refresh);
        assert!(ortho_defect(&q) < 1e-12);
        // The span is preserved: projecting the block onto q loses nothing.
        let proj = &q * q.tr_mul(&block);
        assert!((proj - &block).amax() < 1e-12);
    }

    #[test]
    fn duplicate_column_is_replaced_keeping_width() {
        let mut refresh = GaussianStream::new(12);
        let mut block = DMatrix::zeros(5, 3);
        block.set_column(0, &DVector::from_vec(vec![1.0, 2.0, 0.0, 0.0, 0.0]));
        block.set_column(1, &DVector::from_vec(vec![2.0, 4.0, 0.0, 0.0, 0.0]));
        block.set_column(2, &DVector::from_vec(vec![0.0, 0.0, 3.0, 0.0, 0.0]));
        let q = orthonormalize(&block, &mut refresh);
        assert_eq!(q.ncols(), 3);
        assert!(ortho_defect(&q) < 1e-12);
    }

    #[test]
    fn respects_prior_basis() {
        let mut refresh = GaussianStream::new(13);
        let basis = DMatrix::from_row_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]);
        let block = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let q = orthonormalize_against(&basis, &block, &mut refresh);
        assert!(basis.tr_mul(&q).amax() < 1e-12);
        assert!(ortho_defect(&q) < 1e-12);
    }

    #[test]
    fn completion_reaches_requested_width() {
        let partial = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 0.0, 0.0]);
        let full = coordinate_completion(&partial, 4);
        assert_eq!(full.ncols(), 4);
        assert!(ortho_defect(&full) < 1e-12);
    }
}
