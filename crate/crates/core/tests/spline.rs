use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensor_fen::spline::{
    basis_dimension, build_basis, quantile_knots, quantile_sorted, spline_order, RawBSpline, SplineBasis,
};
use tensor_fen::FenError;

/// Textbook Cox-de Boor recursion, `B_{i,order}` on the full knot vector.
fn cox_de_boor(knots: &[f64], i: usize, order: usize, x: f64) -> f64 {
    if order == 1 {
        return if knots[i] <= x && x < knots[i + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = knots[i + order - 1] - knots[i];
    if d1 > 0.0 {
        v += (x - knots[i]) / d1 * cox_de_boor(knots, i, order - 1, x);
    }
    let d2 = knots[i + order] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + order] - x) / d2 * cox_de_boor(knots, i + 1, order - 1, x);
    }
    v
}

fn full_knots(order: usize, interior: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; order];
    t.extend_from_slice(interior);
    t.extend(std::iter::repeat_n(1.0, order));
    t
}

#[test]
fn raw_basis_matches_cox_de_boor() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for order in 2..=4 {
        for n_int in 0..4 {
            let mut interior: Vec<f64> = (0..n_int).map(|_| rng.random_range(0.05..0.95)).collect();
            interior.sort_by(f64::total_cmp);
            let raw = RawBSpline::new(order, interior.clone()).unwrap();
            let t = full_knots(order, &interior);
            for _ in 0..50 {
                let x: f64 = rng.random_range(0.0..1.0);
                let got = raw.eval(x);
                for (i, g) in got.iter().enumerate() {
                    assert!((g - cox_de_boor(&t, i, order, x)).abs() < 1e-13);
                }
            }
        }
    }
}

#[test]
fn raw_basis_is_a_partition_of_unity_and_clamped() {
    let raw = RawBSpline::new(4, vec![0.2, 0.5, 0.6]).unwrap();
    for s in 0..=100 {
        let x = s as f64 / 100.0;
        let sum: f64 = raw.eval(x).iter().sum();
        assert!((sum - 1.0).abs() < 1e-14);
    }
    let at0 = raw.eval(0.0);
    let at1 = raw.eval(1.0);
    assert_eq!(at0[0], 1.0);
    assert_eq!(*at1.last().unwrap(), 1.0);
}

#[test]
fn raw_derivative_matches_finite_differences() {
    let raw = RawBSpline::new(4, vec![0.3, 0.7]).unwrap();
    let h = 1e-6;
    for &x in &[0.1, 0.45, 0.8] {
        let mut d1 = vec![0.0; raw.dim()];
        raw.eval_deriv(x, 1, &mut d1);
        let (p, m) = (raw.eval(x + h), raw.eval(x - h));
        for i in 0..raw.dim() {
            assert!((d1[i] - (p[i] - m[i]) / (2.0 * h)).abs() < 1e-6);
        }
    }
}

#[test]
fn basis_dimension_rounds_fifth_root() {
    assert_eq!(basis_dimension(32), 2);
    assert_eq!(basis_dimension(500), 3);
    assert_eq!(basis_dimension(1000), 4);
    assert_eq!(spline_order(2), 3);
    assert_eq!(spline_order(3), 4);
    assert_eq!(spline_order(8), 4);
}

#[test]
fn quantiles_interpolate_order_statistics() {
    let sorted = [0.0, 0.1, 0.2, 0.3, 1.0];
    assert_eq!(quantile_sorted(&sorted, 0.5), 0.2);
    assert!((quantile_sorted(&sorted, 0.875) - 0.65).abs() < 1e-15);
    let knots = quantile_knots(&[0.4, 0.1, 0.9, 0.6, 0.3], 5).unwrap();
    assert_eq!(knots.len(), 2);
    assert!(knots[0] < knots[1]);
    assert!(quantile_knots(&[0.5], 3).unwrap().is_empty());
}

#[test]
fn small_samples_and_out_of_range_covariates_fail() {
    let samples: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
    assert!(matches!(build_basis(31, &samples, 1e-4), Err(FenError::SampleTooSmall(31))));
    let mut bad = samples.clone();
    bad[5] = 1.5;
    assert!(matches!(build_basis(500, &bad, 1e-4), Err(FenError::Domain(_))));
    let basis = build_basis(500, &samples, 1e-4).unwrap();
    assert_eq!(basis.dim(), 3);
    assert!(basis.eval(-0.1).is_err());
    assert!(basis.eval(1.0 + 1e-13).is_ok());
}

#[test]
fn tied_samples_are_jittered_once() {
    // Everything at one value collapses the knots; jitter separates them.
    let samples = vec![0.5; 2000];
    let basis = build_basis(1000, &samples, 1e-4).unwrap();
    let knots = basis.interior_knots();
    assert_eq!(knots.len(), 1);
    let two = build_basis(3125, &samples, 1e-4).unwrap();
    let k2 = two.interior_knots();
    assert!(k2.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn cubic_without_interior_knots_has_closed_form_penalty() {
    let basis = SplineBasis::with_knots(3, vec![], 1e-4).unwrap();
    let omega = basis.omega();
    assert!(omega[0].abs() < 1e-9);
    assert!((omega[1] - 720.0).abs() < 1e-7);
    assert!((omega[2] - 8400.0).abs() < 1e-6);
    let r = basis.roughness();
    assert!((r[(0, 0)] - 1e-4).abs() < 1e-12);
}

#[test]
fn wrong_knot_count_is_rejected() {
    assert!(SplineBasis::with_knots(5, vec![0.5], 1e-4).is_err());
    assert!(SplineBasis::with_knots(1, vec![], 1e-4).is_err());
    assert!(SplineBasis::with_knots(3, vec![], 0.0).is_err());
}

proptest! {
    #[test]
    fn rotation_preserves_orthonormality_and_penalty(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = SplineBasis::with_knots(4, vec![rng.random_range(0.2..0.8)], 1e-4).unwrap();
        let m = nalgebra::DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = m.qr().q();
        let rot = basis.rotated(&q).unwrap();
        let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let qb = &q * nalgebra::DVector::from_column_slice(&beta);
        for s in 0..=10 {
            let x = s as f64 / 10.0;
            prop_assert!((basis.eval_function(&beta, x) - rot.eval_function(qb.as_slice(), x)).abs() < 1e-10);
        }
        let b = nalgebra::DVector::from_column_slice(&beta);
        let pen = (b.transpose() * basis.roughness() * &b)[(0, 0)];
        let pen_q = (qb.transpose() * rot.roughness() * &qb)[(0, 0)];
        prop_assert!((pen - pen_q).abs() < 1e-8 * pen.abs().max(1.0));
    }

    #[test]
    fn phi_values_are_finite_on_the_unit_interval(k in 2usize..9, x in 0.0f64..=1.0) {
        let samples: Vec<f64> = (0..200).map(|i| (i as f64 / 199.0).powi(2)).collect();
        let basis = SplineBasis::with_knots(k, quantile_knots(&samples, k).unwrap(), 1e-4).unwrap();
        prop_assert!(basis.eval(x).unwrap().iter().all(|v| v.is_finite()));
    }
}
