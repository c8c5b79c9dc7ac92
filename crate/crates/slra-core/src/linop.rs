//! Implicit linear operators with exact matrix-vector query accounting.
//!
//! The access model: an `n × d` matrix `A` can only be touched through
//! products `A·v` (a NORMAL apply) and `A⊤·v` (an ADJOINT apply), and every
//! such product is counted. A block of `b` simultaneous vectors counts as `b`
//! logical queries; the unit of accounting is a single vector.
//!
//! Operators are immutable after construction except for the ledger, whose
//! counters are atomic so concurrent applies never lose counts. Matrix
//! polynomials ((A⊤A)^ℓ and A(A⊤A)^ℓ) are evaluated by repeated application,
//! never materialized, and charge the base operator's ledger by their chain
//! length.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Largest supported polynomial degree; guards against runaway chains.
pub const MAX_POLY_DEGREE: u32 = 64;

#[derive(Debug, Error)]
pub enum LinOpError {
    #[error("operator shape must have at least one row and one column")]
    EmptyShape,
    #[error("diagonal backing requires a square shape, got {rows}x{cols}")]
    NonSquareDiagonal { rows: usize, cols: usize },
    #[error("{side:?} apply expects a vector of length {expected}, got {got}")]
    DimensionMismatch {
        side: Side,
        expected: usize,
        got: usize,
    },
    #[error("sparse entry ({row}, {col}) lies outside a {rows}x{cols} operator")]
    TripletOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("polynomial degree {degree} exceeds the supported maximum {max}")]
    DegreeOverflow { degree: u32, max: u32 },
}

/// Which product is requested: `A·v` or `A⊤·v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Normal,
    Adjoint,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::Normal => Side::Adjoint,
            Side::Adjoint => Side::Normal,
        }
    }
}

/// Row/column dimensions of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorShape {
    pub rows: usize,
    pub cols: usize,
}

impl OperatorShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self, LinOpError> {
        if rows == 0 || cols == 0 {
            return Err(LinOpError::EmptyShape);
        }
        Ok(Self { rows, cols })
    }

    pub fn transposed(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
        }
    }

    /// Expected input length for an apply on the given side.
    pub fn input_len(self, side: Side) -> usize {
        match side {
            Side::Normal => self.cols,
            Side::Adjoint => self.rows,
        }
    }

    pub fn output_len(self, side: Side) -> usize {
        match side {
            Side::Normal => self.rows,
            Side::Adjoint => self.cols,
        }
    }
}

/// Monotone counters of NORMAL and ADJOINT products, atomic in effect.
#[derive(Debug, Default)]
pub struct QueryLedger {
    applies: AtomicU64,
    adjoint_applies: AtomicU64,
}

impl QueryLedger {
    fn charge(&self, side: Side, count: u64) {
        match side {
            Side::Normal => self.applies.fetch_add(count, Ordering::Relaxed),
            Side::Adjoint => self.adjoint_applies.fetch_add(count, Ordering::Relaxed),
        };
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            applies: self.applies.load(Ordering::Relaxed),
            adjoint_applies: self.adjoint_applies.load(Ordering::Relaxed),
        }
    }
}

/// Immutable copy of the ledger counters at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LedgerSnapshot {
    pub applies: u64,
    pub adjoint_applies: u64,
}

impl LedgerSnapshot {
    pub fn total(self) -> u64 {
        self.applies + self.adjoint_applies
    }

    /// Counter growth since an earlier snapshot of the same ledger.
    pub fn since(self, earlier: LedgerSnapshot) -> LedgerSnapshot {
        debug_assert!(self.applies >= earlier.applies);
        debug_assert!(self.adjoint_applies >= earlier.adjoint_applies);
        LedgerSnapshot {
            applies: self.applies - earlier.applies,
            adjoint_applies: self.adjoint_applies - earlier.adjoint_applies,
        }
    }
}

/// Which matrix polynomial a [`PolynomialSpec`] denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolynomialKind {
    /// `(A⊤A)^ℓ`, a `d × d` symmetric operator.
    GramPower,
    /// `A (A⊤A)^ℓ`, an `n × d` operator.
    AGramPower,
}

/// A matrix polynomial of a base operator, evaluated by repeated application.
#[derive(Clone)]
pub struct PolynomialSpec {
    pub base: LinearOperator,
    pub degree: u32,
    pub kind: PolynomialKind,
}

enum Backing {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
    Sparse {
        shape: OperatorShape,
        /// Sorted by (row, col); duplicate coordinates already summed.
        triplets: Vec<(usize, usize, f64)>,
    },
    Polynomial(PolynomialSpec),
}

/// Descriptor accepted by [`build_operator`].
pub enum BackingSpec {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
    Sparse {
        rows: usize,
        cols: usize,
        triplets: Vec<(usize, usize, f64)>,
    },
}

/// An implicit matrix exposing counted apply / adjoint-apply actions.
///
/// Cloning is cheap and shares both the backing and the ledger, so clones of
/// one operator account into the same counters. Use
/// [`LinearOperator::with_fresh_ledger`] for an independently counted handle.
#[derive(Clone)]
pub struct LinearOperator {
    shape: OperatorShape,
    backing: Arc<Backing>,
    ledger: Arc<QueryLedger>,
    transposed: bool,
}

impl std::fmt::Debug for LinearOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match *self.backing {
            Backing::Dense(_) => "dense",
            Backing::Diagonal(_) => "diagonal",
            Backing::Sparse { .. } => "sparse",
            Backing::Polynomial(_) => "polynomial",
        };
        f.debug_struct("LinearOperator")
            .field("shape", &self.shape)
            .field("backing", &kind)
            .field("transposed", &self.transposed)
            .field("ledger", &self.ledger.snapshot())
            .finish()
    }
}

/// Builds an operator with a zeroed ledger from a backing descriptor.
pub fn build_operator(spec: BackingSpec) -> Result<LinearOperator, LinOpError> {
    let backing = match spec {
        BackingSpec::Dense(m) => {
            let shape = OperatorShape::new(m.nrows(), m.ncols())?;
            check_finite(m.iter().copied(), "dense backing")?;
            let _ = shape;
            Backing::Dense(m)
        }
        BackingSpec::Diagonal(v) => {
            if v.is_empty() {
                return Err(LinOpError::EmptyShape);
            }
            check_finite(v.iter().copied(), "diagonal backing")?;
            Backing::Diagonal(v)
        }
        BackingSpec::Sparse {
            rows,
            cols,
            triplets,
        } => {
            let shape = OperatorShape::new(rows, cols)?;
            let mut entries = Vec::with_capacity(triplets.len());
            for (r, c, v) in triplets {
                if r >= rows || c >= cols {
                    return Err(LinOpError::TripletOutOfBounds {
                        row: r,
                        col: c,
                        rows,
                        cols,
                    });
                }
                if !v.is_finite() {
                    return Err(LinOpError::NonFinite {
                        what: "sparse backing",
                    });
                }
                entries.push((r, c, v));
            }
            // Matrix Market convention: duplicate coordinates are summed.
            entries.sort_by_key(|&(r, c, _)| (r, c));
            let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
            for (r, c, v) in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == r && last.1 == c => last.2 += v,
                    _ => merged.push((r, c, v)),
                }
            }
            Backing::Sparse {
                shape,
                triplets: merged,
            }
        }
    };
    Ok(LinearOperator::from_backing(backing))
}

/// Wraps a base operator into its degree-`ℓ` matrix polynomial.
///
/// The returned operator shares the base ledger: one NORMAL apply of a
/// `GramPower` charges exactly `ℓ` applies plus `ℓ` adjoint applies there,
/// and an `AGramPower` charges `ℓ+1` and `ℓ`. Nothing is materialized.
pub fn polynomial_operator(spec: PolynomialSpec) -> Result<LinearOperator, LinOpError> {
    if spec.degree > MAX_POLY_DEGREE {
        return Err(LinOpError::DegreeOverflow {
            degree: spec.degree,
            max: MAX_POLY_DEGREE,
        });
    }
    let base_shape = spec.base.shape();
    let shape = match spec.kind {
        PolynomialKind::GramPower => OperatorShape::new(base_shape.cols, base_shape.cols)?,
        PolynomialKind::AGramPower => base_shape,
    };
    let ledger = spec.base.ledger.clone();
    Ok(LinearOperator {
        shape,
        backing: Arc::new(Backing::Polynomial(spec)),
        ledger,
        transposed: false,
    })
}

/// Snapshot of the operator's query counters; does not mutate state.
pub fn ledger_report(op: &LinearOperator) -> LedgerSnapshot {
    op.ledger.snapshot()
}

/// Counted product with a single vector: `A·v` (NORMAL) or `A⊤·v` (ADJOINT).
pub fn apply(op: &LinearOperator, v: &DVector<f64>, side: Side) -> Result<DVector<f64>, LinOpError> {
    let block = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    let out = apply_block(op, &block, side)?;
    Ok(out.column(0).clone_owned())
}

/// Counted product with a block of vectors; charges one query per column.
pub fn apply_block(
    op: &LinearOperator,
    block: &DMatrix<f64>,
    side: Side,
) -> Result<DMatrix<f64>, LinOpError> {
    let expected = op.shape.input_len(side);
    if block.nrows() != expected {
        return Err(LinOpError::DimensionMismatch {
            side,
            expected,
            got: block.nrows(),
        });
    }
    check_finite(block.iter().copied(), "input vector")?;
    let effective = if op.transposed { side.flipped() } else { side };
    let out = op.dispatch(block, effective, true)?;
    Ok(out)
}

impl LinearOperator {
    fn from_backing(backing: Backing) -> Self {
        let shape = backing_shape(&backing);
        LinearOperator {
            shape,
            backing: Arc::new(backing),
            ledger: Arc::new(QueryLedger::default()),
            transposed: false,
        }
    }

    pub fn dense(m: DMatrix<f64>) -> Result<Self, LinOpError> {
        build_operator(BackingSpec::Dense(m))
    }

    pub fn diagonal(v: DVector<f64>) -> Result<Self, LinOpError> {
        build_operator(BackingSpec::Diagonal(v))
    }

    pub fn sparse(
        rows: usize,
        cols: usize,
        triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self, LinOpError> {
        build_operator(BackingSpec::Sparse {
            rows,
            cols,
            triplets,
        })
    }

    pub fn identity(dim: usize) -> Result<Self, LinOpError> {
        Self::diagonal(DVector::from_element(dim, 1.0))
    }

    pub fn shape(&self) -> OperatorShape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    /// The adjoint view `A⊤`. Shares backing and ledger: a NORMAL apply of
    /// the view is an ADJOINT apply of the base and is counted as such.
    pub fn adjoint(&self) -> LinearOperator {
        LinearOperator {
            shape: self.shape.transposed(),
            backing: self.backing.clone(),
            ledger: self.ledger.clone(),
            transposed: !self.transposed,
        }
    }

    /// Same backing, new zeroed ledger (for independently counted trials).
    pub fn with_fresh_ledger(&self) -> LinearOperator {
        LinearOperator {
            shape: self.shape,
            backing: self.backing.clone(),
            ledger: Arc::new(QueryLedger::default()),
            transposed: self.transposed,
        }
    }

    pub fn ledger_snapshot(&self) -> LedgerSnapshot {
        self.ledger.snapshot()
    }

    /// Uncounted dense reconstruction of the operator.
    ///
    /// Oracle/diagnostic escape hatch: bypasses the ledger entirely. Used by
    /// residual certificates and tests, never by the query-counted algorithms.
    pub fn explicit_matrix(&self) -> DMatrix<f64> {
        let base = match self.backing.as_ref() {
            Backing::Dense(m) => m.clone(),
            Backing::Diagonal(v) => DMatrix::from_diagonal(v),
            Backing::Sparse { shape, triplets } => {
                let mut m = DMatrix::zeros(shape.rows, shape.cols);
                for &(r, c, v) in triplets {
                    m[(r, c)] += v;
                }
                m
            }
            Backing::Polynomial(spec) => {
                let a = spec.base.explicit_matrix();
                let gram = a.tr_mul(&a);
                let mut acc = DMatrix::identity(a.ncols(), a.ncols());
                for _ in 0..spec.degree {
                    acc = &gram * acc;
                }
                match spec.kind {
                    PolynomialKind::GramPower => acc,
                    PolynomialKind::AGramPower => &a * acc,
                }
            }
        };
        if self.transposed {
            base.transpose()
        } else {
            base
        }
    }

    /// Uncounted block product; same oracle caveat as [`Self::explicit_matrix`].
    pub fn apply_block_uncounted(&self, block: &DMatrix<f64>, side: Side) -> DMatrix<f64> {
        let effective = if self.transposed { side.flipped() } else { side };
        self.dispatch(block, effective, false)
            .expect("uncounted apply on validated operator")
    }

    /// `side` here is already base-oriented (the transposed flag is resolved
    /// by the callers). Charges the ledger only when `counted` is set.
    fn dispatch(
        &self,
        block: &DMatrix<f64>,
        side: Side,
        counted: bool,
    ) -> Result<DMatrix<f64>, LinOpError> {
        let out = match self.backing.as_ref() {
            Backing::Dense(m) => match side {
                Side::Normal => m * block,
                Side::Adjoint => m.tr_mul(block),
            },
            Backing::Diagonal(dvals) => {
                let mut out = block.clone();
                for i in 0..out.nrows() {
                    let scale = dvals[i];
                    for j in 0..out.ncols() {
                        out[(i, j)] *= scale;
                    }
                }
                out
            }
            Backing::Sparse { shape, triplets } => {
                let (out_rows, _) = match side {
                    Side::Normal => (shape.rows, shape.cols),
                    Side::Adjoint => (shape.cols, shape.rows),
                };
                let mut out = DMatrix::zeros(out_rows, block.ncols());
                for &(r, c, v) in triplets {
                    let (to, from) = match side {
                        Side::Normal => (r, c),
                        Side::Adjoint => (c, r),
                    };
                    for j in 0..block.ncols() {
                        out[(to, j)] += v * block[(from, j)];
                    }
                }
                out
            }
            Backing::Polynomial(spec) => {
                return poly_apply(spec, block, side, counted);
            }
        };
        if counted {
            self.ledger.charge(side, block.ncols() as u64);
        }
        Ok(out)
    }
}

/// Evaluates the polynomial by chained base products. The chain charges the
/// (shared) base ledger; the polynomial wrapper itself charges nothing, so
/// the reported delta is exactly the chain length.
fn poly_apply(
    spec: &PolynomialSpec,
    block: &DMatrix<f64>,
    side: Side,
    counted: bool,
) -> Result<DMatrix<f64>, LinOpError> {
    let base = &spec.base;
    let one_gram = |x: DMatrix<f64>| -> Result<DMatrix<f64>, LinOpError> {
        let t = base_apply(base, &x, Side::Normal, counted)?;
        base_apply(base, &t, Side::Adjoint, counted)
    };
    match (spec.kind, side) {
        (PolynomialKind::GramPower, _) => {
            // (A⊤A)^ℓ is symmetric; NORMAL and ADJOINT coincide.
            let mut x = block.clone();
            for _ in 0..spec.degree {
                x = one_gram(x)?;
            }
            Ok(x)
        }
        (PolynomialKind::AGramPower, Side::Normal) => {
            let mut x = block.clone();
            for _ in 0..spec.degree {
                x = one_gram(x)?;
            }
            base_apply(base, &x, Side::Normal, counted)
        }
        (PolynomialKind::AGramPower, Side::Adjoint) => {
            // (A(A⊤A)^ℓ)⊤ = (A⊤A)^ℓ A⊤
            let mut x = base_apply(base, block, Side::Adjoint, counted)?;
            for _ in 0..spec.degree {
                x = one_gram(x)?;
            }
            Ok(x)
        }
    }
}

fn base_apply(
    op: &LinearOperator,
    block: &DMatrix<f64>,
    side: Side,
    counted: bool,
) -> Result<DMatrix<f64>, LinOpError> {
    if counted {
        apply_block(op, block, side)
    } else {
        Ok(op.apply_block_uncounted(block, side))
    }
}

fn backing_shape(backing: &Backing) -> OperatorShape {
    match backing {
        Backing::Dense(m) => OperatorShape {
            rows: m.nrows(),
            cols: m.ncols(),
        },
        Backing::Diagonal(v) => OperatorShape {
            rows: v.len(),
            cols: v.len(),
        },
        Backing::Sparse { shape, .. } => *shape,
        Backing::Polynomial(spec) => {
            let base = spec.base.shape();
            match spec.kind {
                PolynomialKind::GramPower => OperatorShape {
                    rows: base.cols,
                    cols: base.cols,
                },
                PolynomialKind::AGramPower => base,
            }
        }
    }
}

fn check_finite<I: Iterator<Item = f64>>(values: I, what: &'static str) -> Result<(), LinOpError> {
    for v in values {
        if !v.is_finite() {
            return Err(LinOpError::NonFinite { what });
        }
    }
    Ok(())
}
