//! Block Krylov behavior: schedules, convergence, accounting, determinism.

use nalgebra::{DMatrix, DVector};
use slra_core::krylov::{
    block_krylov, block_krylov_with_start, gap_dependent_schedule, gap_independent_schedule,
    per_vector_errors, KrylovError, KrylovParams,
};
use slra_core::linop::{ledger_report, LinearOperator};
use slra_core::rng::{gaussian_matrix, random_orthonormal};
use slra_core::spectral::{dense_svd, residual_cost, SchattenP};

#[test]
fn gap_independent_schedule_formula() {
    // ceil(ln(100/0.04) / sqrt(0.04)) = ceil(ln(2500)/0.2) = ceil(39.11) = 40.
    assert_eq!(gap_independent_schedule(100, 0.04, 1.0).unwrap(), 40);
    // gamma = 1 leaves a bare ceil(c ln d).
    assert_eq!(
        gap_independent_schedule(100, 1.0, 1.0).unwrap(),
        (100.0_f64.ln()).ceil() as usize
    );
    assert!(gap_independent_schedule(100, 0.0, 1.0).is_err());
    assert!(gap_independent_schedule(100, 1.5, 1.0).is_err());
}

#[test]
fn gap_independent_schedule_monotone_in_gamma() {
    // Tighter accuracy (smaller gamma) can only demand more iterations.
    let mut last = 0;
    for gamma in [1.0, 0.5, 0.25, 0.125, 0.0625] {
        let q = gap_independent_schedule(500, gamma, 2.0).unwrap();
        assert!(q >= last);
        last = q;
    }
    // Halving gamma from 0.04 grows q by at least sqrt(2) up to rounding.
    let a = gap_independent_schedule(100, 0.04, 1.0).unwrap();
    let b = gap_independent_schedule(100, 0.02, 1.0).unwrap();
    assert!(b as f64 >= a as f64 * std::f64::consts::SQRT_2 * 0.9);
}

#[test]
fn gap_dependent_schedule_formula() {
    // sigma_low = 0 leaves a unit gap factor.
    assert_eq!(
        gap_dependent_schedule(100, 0.1, 2.0, 0.0, 1.0).unwrap(),
        ((100.0_f64 / 0.1).ln()).ceil() as usize
    );
    // sigma_low = sigma_high/2 gives a sqrt(2) factor.
    assert_eq!(
        gap_dependent_schedule(100, 0.1, 2.0, 1.0, 1.0).unwrap(),
        ((100.0_f64 / 0.1).ln() * 2.0_f64.sqrt()).ceil() as usize
    );
    assert!(matches!(
        gap_dependent_schedule(100, 0.1, 1.0, 1.0, 1.0),
        Err(KrylovError::NoGap { .. })
    ));
}

#[test]
fn converges_fast_under_large_gap() {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0, 0.1]));
    let op = LinearOperator::dense(a).unwrap();
    let run = block_krylov(&op, &KrylovParams::new(1, 1, 2, 9)).unwrap();
    assert!(
        run.rayleigh_values[0] >= 100.0 - 1e-6,
        "rayleigh {}",
        run.rayleigh_values[0]
    );
}

#[test]
fn exact_rank_capture_gives_zero_residual() {
    // Rank-3 matrix 12x9; a block of 3 spans the row space almost surely.
    let left = gaussian_matrix(201, 12, 3);
    let right = gaussian_matrix(202, 9, 3);
    let a = &left * right.transpose();
    let op = LinearOperator::dense(a.clone()).unwrap();
    let run = block_krylov(&op, &KrylovParams::new(3, 3, 1, 203)).unwrap();
    let residual = residual_cost(&a, &run.basis, SchattenP::Finite(2.0)).unwrap();
    assert!(residual <= 1e-8, "residual {residual}");
}

#[test]
fn query_accounting_is_exact() {
    // s adjoint applies form the first block, then 2s per further round.
    for (s, q) in [(2usize, 4usize), (3, 2), (1, 5)] {
        let op = LinearOperator::dense(gaussian_matrix(211, 30, 20)).unwrap();
        let before = ledger_report(&op);
        let run = block_krylov(&op, &KrylovParams::new(1, s, q, 212)).unwrap();
        let delta = ledger_report(&op).since(before);
        assert_eq!(delta.applies as usize, s * q);
        assert_eq!(delta.adjoint_applies as usize, s * (q + 1));
        assert_eq!(run.queries_used, delta);
    }
}

#[test]
fn per_vector_error_examples() {
    let m = gaussian_matrix(221, 10, 8);
    let spectrum = dense_svd(&m).unwrap();
    let z = spectrum.right_factor.columns(0, 3).clone_owned();
    let errors = per_vector_errors(&m, &z).unwrap();
    assert!(errors.iter().all(|e| e.abs() <= 1e-9), "errors {errors:?}");

    // diag(2,1) with Z = e2: the top direction is missed entirely.
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
    let mut e2 = DMatrix::zeros(2, 1);
    e2[(1, 0)] = 1.0;
    let errors = per_vector_errors(&a, &e2).unwrap();
    assert!((errors[0] - 3.0).abs() <= 1e-12);
}

#[test]
fn per_vector_errors_of_random_basis_stay_below_sigma_squared() {
    let a = {
        let mut diag = vec![1.0; 8];
        diag[0] = 10.0;
        diag[1] = 8.0;
        diag[2] = 6.0;
        let u = random_orthonormal(231, 10, 8);
        let v = random_orthonormal(232, 8, 8);
        let mut scaled = u;
        for (j, &s) in diag.iter().enumerate() {
            scaled.column_mut(j).scale_mut(s);
        }
        scaled * v.transpose()
    };
    let sigma = dense_svd(&a).unwrap().singular_values;
    let z = random_orthonormal(233, 8, 3);
    let errors = per_vector_errors(&a, &z).unwrap();
    for (i, e) in errors.iter().enumerate() {
        assert!(*e <= sigma[i] * sigma[i] + 1e-12);
    }
    // The top direction can only be underestimated.
    assert!(errors[0] >= -1e-12);
}

#[test]
fn per_vector_guarantee_holds_at_the_scheduled_iteration_count() {
    // Mini version of the acceptance sweep: 10 seeds, 60x40, k = 3.
    let gamma = 0.1;
    let q = gap_independent_schedule(40, gamma, 4.0).unwrap();
    let mut hits = 0;
    for seed in 0..10u64 {
        let a = gaussian_matrix(241 + seed, 60, 40);
        let sigma = dense_svd(&a).unwrap().singular_values;
        let op = LinearOperator::dense(a.clone()).unwrap();
        let run = block_krylov(&op, &KrylovParams::new(3, 3, q, 251 + seed)).unwrap();
        let errors = per_vector_errors(&a, &run.basis).unwrap();
        let bound = gamma * sigma[3] * sigma[3];
        if errors.iter().all(|&e| e <= bound + 1e-9) {
            hits += 1;
        }
    }
    assert!(hits >= 9, "only {hits}/10 seeds met the per-vector bound");
}

#[test]
fn dense_fallback_is_exact() {
    // s(q+1) >= d forces the fallback, which extracts the matrix and answers
    // from the dense oracle.
    let a = gaussian_matrix(261, 15, 10);
    let sigma = dense_svd(&a).unwrap().singular_values;
    let op = LinearOperator::dense(a.clone()).unwrap();
    let run = block_krylov(&op, &KrylovParams::new(2, 4, 3, 262)).unwrap();
    assert_eq!(run.queries_used.applies, 10);
    assert_eq!(run.queries_used.adjoint_applies, 0);
    for i in 0..2 {
        assert!((run.rayleigh_values[i] - sigma[i] * sigma[i]).abs() <= 1e-8);
    }
}

#[test]
fn identical_seeds_are_bitwise_identical() {
    let op = LinearOperator::dense(gaussian_matrix(271, 18, 16)).unwrap();
    let params = KrylovParams::new(2, 3, 3, 272);
    let a = block_krylov(&op, &params).unwrap();
    let b = block_krylov(&op, &params).unwrap();
    assert_eq!(a.basis, b.basis);
    assert_eq!(a.rayleigh_values, b.rayleigh_values);
    let other = block_krylov(&op, &KrylovParams::new(2, 3, 3, 273)).unwrap();
    assert_ne!(a.basis, other.basis);
}

#[test]
fn warm_start_charges_two_s_per_round_and_improves() {
    let a = gaussian_matrix(281, 26, 16);
    let op = LinearOperator::dense(a.clone()).unwrap();
    let cold = block_krylov(&op, &KrylovParams::new(2, 2, 2, 282)).unwrap();
    let start = {
        let mut m = DMatrix::zeros(16, 2);
        m.copy_from(&cold.basis);
        m
    };
    let before = ledger_report(&op);
    let params = KrylovParams::new(2, 2, 3, 283);
    let warm = block_krylov_with_start(&op, &params, &start).unwrap();
    let delta = ledger_report(&op).since(before);
    assert_eq!(delta.applies, 2 * 3);
    assert_eq!(delta.adjoint_applies, 2 * 3);
    // More rounds from an already-good block cannot lose accuracy.
    assert!(warm.rayleigh_values[0] >= cold.rayleigh_values[0] - 1e-9);
}

#[test]
fn parameter_validation_errors() {
    let op = LinearOperator::dense(gaussian_matrix(291, 6, 5)).unwrap();
    assert!(matches!(
        block_krylov(&op, &KrylovParams::new(0, 1, 1, 0)),
        Err(KrylovError::ZeroRank)
    ));
    assert!(matches!(
        block_krylov(&op, &KrylovParams::new(3, 2, 1, 0)),
        Err(KrylovError::BlockSize { .. })
    ));
    assert!(matches!(
        block_krylov(&op, &KrylovParams::new(1, 1, 0, 0)),
        Err(KrylovError::ZeroIterations)
    ));
}
