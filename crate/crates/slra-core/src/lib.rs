//! Matrix-free low-rank approximation in the matrix-vector query model.
//!
//! Everything here revolves around one accounting rule: the only access to the
//! input matrix `A` is through counted products `A·v` and `A⊤·v`. The crate
//! provides
//!
//! * [`linop`] — implicit operators (dense, diagonal, sparse, and
//!   matrix-polynomial backings) with an exact, thread-safe query ledger;
//! * [`spectral`] — the dense SVD ground-truth oracle, Schatten-p norms, a
//!   closed-form 2×2 SVD, and slack evaluators for the operator inequalities
//!   used by the verification suites;
//! * [`krylov`] — block Krylov iteration over a [`linop::LinearOperator`]
//!   together with the gap-independent / gap-dependent iteration schedules;
//! * [`lra`] — the two-scale Schatten-p low-rank approximation driver with
//!   its spectrum probe and branch selection, a Frobenius rank-1 sketch, and
//!   streaming pass/space footprint arithmetic;
//! * [`hardness`] — Wishart sampling, the `I − W/5` hard instance, and the
//!   min-eigenvalue estimator experiment built on top of the LRA driver;
//! * [`verify`] — seeded property suites (pinching, Araki-Lieb-Thirring,
//!   Hölder, norm compression, ...) reported as pass/fail with worst slacks;
//! * [`matfile`] — dense CSV and Matrix Market ingestion;
//! * [`rng`] — the shared counter-based seeded Gaussian sampler that keeps
//!   every randomized routine reproducible.

pub mod hardness;
pub mod krylov;
pub mod linop;
pub mod lra;
pub mod matfile;
pub mod rng;
pub mod spectral;
pub mod verify;

pub(crate) mod ortho;
