//! Seeded Gaussian sampling shared by every randomized routine in the crate.
//!
//! ChaCha is a counter-based stream cipher, so a `(seed, stream)` pair pins
//! the whole sample sequence independently of platform word order or prior
//! draws. All modules derive their block seeds through [`mix`] so that one
//! user-facing seed fans out into decorrelated per-stage streams while runs
//! stay bitwise reproducible.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Derives a stage seed from a base seed and a stream tag (SplitMix64 step).
///
/// Distinct tags give statistically unrelated streams for the same user seed.
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic stream of standard Gaussian draws.
pub struct GaussianStream {
    rng: ChaCha12Rng,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Next standard normal draw.
    pub fn sample(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Fills a `rows × cols` matrix column-major with i.i.d. N(0, 1) draws.
    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = self.sample();
            }
        }
        m
    }
}

/// One-shot `rows × cols` standard Gaussian matrix for the given seed.
pub fn gaussian_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    GaussianStream::new(seed).matrix(rows, cols)
}

/// Seeded random column-orthonormal `rows × cols` matrix (QR of a Gaussian).
///
/// Requires `cols <= rows`; used by tests and the verification suites for
/// random bases and rotations.
pub fn random_orthonormal(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    assert!(
        cols <= rows,
        "orthonormal basis needs cols ({cols}) <= rows ({rows})"
    );
    let g = gaussian_matrix(seed, rows, cols);
    let qr = g.qr();
    let q = qr.q();
    q.columns(0, cols).into_owned()
}
