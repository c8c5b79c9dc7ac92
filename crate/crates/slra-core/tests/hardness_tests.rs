//! Wishart instance statistics, the min-eigenvalue estimator, and the
//! end-to-end reduction experiment.

use nalgebra::{DMatrix, DVector};
use slra_core::hardness::{
    hard_instance_from, hard_instance_power_sums, hardness_experiment, min_eig_estimate,
    sample_wishart, HardnessConfig, HardnessError, WishartInstance,
};
use slra_core::linop::{ledger_report, Side};
use slra_core::spectral::{schatten_power_sum, symmetric_eigen_desc};

#[test]
fn one_dimensional_wishart_has_unit_mean() {
    let mut sum = 0.0;
    let trials = 4000;
    for seed in 0..trials {
        sum += sample_wishart(1, seed).matrix[(0, 0)];
    }
    let mean = sum / trials as f64;
    assert!((mean - 1.0).abs() <= 0.1, "mean {mean}");
}

#[test]
fn trace_over_n_concentrates_at_one() {
    let mut sum = 0.0;
    let trials = 200;
    for seed in 0..trials {
        sum += sample_wishart(50, 1000 + seed).matrix.trace() / 50.0;
    }
    let mean = sum / trials as f64;
    assert!((mean - 1.0).abs() <= 0.1, "mean {mean}");
}

#[test]
fn instance_spectrum_is_one_minus_a_fifth_of_wishart() {
    let inst = sample_wishart(15, 77);
    let (w_eigs, _) = symmetric_eigen_desc(&inst.matrix);
    let op = hard_instance_from(&inst).unwrap();
    let (a_eigs, _) = symmetric_eigen_desc(&op.explicit_matrix());
    // lambda(A) = 1 - lambda(W)/5, so the orders reverse.
    for (i, a) in a_eigs.iter().enumerate() {
        let expect = 1.0 - w_eigs[w_eigs.len() - 1 - i] / 5.0;
        assert!((a - expect).abs() <= 1e-10, "index {i}: {a} vs {expect}");
    }
}

#[test]
fn estimator_is_zero_on_the_identity_instance() {
    let zero = WishartInstance {
        dimension: 4,
        matrix: DMatrix::zeros(4, 4),
        factor: DMatrix::zeros(4, 4),
        seed: 0,
    };
    let op = hard_instance_from(&zero).unwrap();
    let mut v = DVector::zeros(4);
    v[2] = 1.0;
    let hat = min_eig_estimate(&op, &v, 3.0).unwrap();
    assert!(hat.abs() <= 1e-12);
}

#[test]
fn estimator_matches_the_closed_form_on_the_top_eigenvector() {
    let inst = sample_wishart(12, 4242);
    let (w_eigs, _) = symmetric_eigen_desc(&inst.matrix);
    let lambda_min = *w_eigs.last().unwrap();
    assert!(w_eigs[0] < 5.0, "seed draws an unusually wide spectrum");
    let op = hard_instance_from(&inst).unwrap();
    let (_, a_vecs) = symmetric_eigen_desc(&op.explicit_matrix());
    let v = a_vecs.column(0).clone_owned();
    // p = 1 cancels the power: 5 (1 - ||Av||) recovers lambda_min exactly.
    let hat = min_eig_estimate(&op, &v, 1.0).unwrap();
    assert!((hat - lambda_min).abs() <= 1e-10, "{hat} vs {lambda_min}");
    // General p keeps the deterministic value (5/p)(1 - (1 - lambda_min/5)^p).
    let hat2 = min_eig_estimate(&op, &v, 2.0).unwrap();
    let expect2 = 2.5 * (1.0 - (1.0 - lambda_min / 5.0).powi(2));
    assert!((hat2 - expect2).abs() <= 1e-10);
}

#[test]
fn estimator_spends_exactly_one_apply() {
    let op = slra_core::hardness::hard_instance(9, 7).unwrap();
    let mut v = DVector::zeros(9);
    v[0] = 1.0;
    let before = ledger_report(&op);
    min_eig_estimate(&op, &v, 2.0).unwrap();
    let delta = ledger_report(&op).since(before);
    assert_eq!((delta.applies, delta.adjoint_applies), (1, 0));
}

#[test]
fn estimator_rejects_bad_inputs() {
    let op = slra_core::hardness::hard_instance(5, 8).unwrap();
    let long = DVector::from_element(5, 1.0);
    assert!(matches!(
        min_eig_estimate(&op, &long, 2.0),
        Err(HardnessError::NonUnitVector { .. })
    ));
    let mut unit = DVector::zeros(5);
    unit[0] = 1.0;
    assert!(matches!(
        min_eig_estimate(&op, &unit, 0.5),
        Err(HardnessError::BadOrder { .. })
    ));
}

#[test]
fn power_sums_match_the_dense_spectrum() {
    let inst = sample_wishart(30, 99);
    let (w_eigs, _) = symmetric_eigen_desc(&inst.matrix);
    assert!(w_eigs[0] <= 5.0, "seed draws an unusually wide spectrum");
    let sigma: Vec<f64> = w_eigs.iter().map(|l| (1.0 - l / 5.0).abs()).collect();
    let (p1, p2, p3) = hard_instance_power_sums(&inst.matrix);
    for (p, got) in [(1.0, p1), (2.0, p2), (3.0, p3)] {
        let want = schatten_power_sum(&sigma, p);
        assert!((got - want).abs() <= 1e-9 * want.max(1.0), "p={p}");
    }
}

#[test]
fn schatten_mass_brackets_at_moderate_dimension() {
    for seed in 0..3u64 {
        let inst = sample_wishart(200, 2000 + seed);
        let (p1, p2, p3) = hard_instance_power_sums(&inst.matrix);
        let n = 200.0;
        for (p, val) in [(1, p1), (2, p2), (3, p3)] {
            assert!(
                val >= 0.1 * n && val <= n,
                "seed {seed} p={p}: mass {val} outside [{}, {}]",
                0.1 * n,
                n
            );
        }
    }
}

#[test]
fn experiment_recovers_the_min_eigenvalue() {
    for (seed, p) in [(1u64, 1.0), (2, 2.0), (3, 4.0)] {
        let cfg = HardnessConfig::new(seed);
        let report = hardness_experiment(40, p, &cfg).unwrap();
        assert_eq!(report.dimension, 40);
        assert!((report.eps - 1.0 / 64000.0).abs() <= 1e-18);
        assert!(report.lambda_min_true >= 0.0);
        assert!((report.abs_error - (report.lambda_hat - report.lambda_min_true).abs()).abs() <= 1e-15);
        let tol = 2.0 * report.eps.powf(2.0 / 3.0);
        assert!(
            report.abs_error <= tol,
            "seed {seed} p={p}: error {} vs {tol}",
            report.abs_error
        );
        assert!(report.queries_used.total() > 0);
        assert!(report.residual.is_some());
        assert!(report.optimum > 0.0);
    }
}

#[test]
fn experiment_flags_wide_spectra_instead_of_failing() {
    // Whatever the draw, the report carries the operator-norm check rather
    // than gating on it.
    let cfg = HardnessConfig::new(31);
    let report = hardness_experiment(12, 2.0, &cfg).unwrap();
    assert_eq!(report.opnorm_exceeds_bound, report.opnorm_w > 5.0);
}

#[test]
fn adjoint_of_the_symmetric_instance_equals_normal() {
    // The stored matrix is exactly symmetric; the two apply paths still sum
    // in different orders, so equality holds to rounding, not bitwise.
    let op = slra_core::hardness::hard_instance(10, 55).unwrap();
    let v = slra_core::rng::gaussian_matrix(56, 10, 1)
        .column(0)
        .clone_owned();
    let a = slra_core::linop::apply(&op, &v, Side::Normal).unwrap();
    let b = slra_core::linop::apply(&op, &v, Side::Adjoint).unwrap();
    assert!((a - b).amax() <= 1e-12);
}
