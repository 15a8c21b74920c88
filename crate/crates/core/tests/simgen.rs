use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tensor_fen::grid::{build_grid_graph, TensorShape};
use tensor_fen::quadrature::integrate_unit;
use tensor_fen::simgen::{
    centering_constant, generate, generate_toy, make_setting, noise_variance, rescale_to, setting_spec,
    signal_variance, smooth_field, toy_design, Pattern, ShapeMask, ToyKind,
};

#[test]
fn setting_two_is_low_rank_nonlinear_with_centering_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = make_setting(2, 15, 15, None, 80, &mut rng).unwrap();
    assert_eq!(s.pattern, Pattern::LowRank);
    assert_eq!(s.snr, 50.0);
    assert!(!s.linear);
    let active: Vec<usize> = (0..225).filter(|&t| s.fields.active[t]).collect();
    assert!(!active.is_empty());
    for &t in &active {
        assert!((s.fields.m[t] - 3.0).abs() < 1e-12);
    }
}

#[test]
fn components_are_centred() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for id in [1, 3, 4, 8] {
        let s = make_setting(id, 12, 10, None, 40, &mut rng).unwrap();
        for t in (0..120).filter(|&t| s.fields.active[t]) {
            let mean = integrate_unit(|x| s.fields.eval(t, x), 10, 20);
            assert!(mean.abs() < 1e-10, "setting {id} entry {t}: {mean}");
        }
    }
}

#[test]
fn centering_constant_handles_zero_frequencies() {
    assert_eq!(centering_constant(0.0, 1.0, 0.0, 0.0), 0.5);
    assert!((centering_constant(2.0, 0.0, 0.0, 0.0) - 2.0).abs() < 1e-15);
}

#[test]
fn noise_matches_requested_snr() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = make_setting(1, 15, 15, None, 80, &mut rng).unwrap();
    let noise = noise_variance(&s, &mut rng);
    let d = generate(&s.fields, 20_000, noise, &mut rng);
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let eps: Vec<f64> = d.y.iter().zip(&d.signal).map(|(y, f)| y - f).collect();
    let snr = var(&d.signal) / var(&eps);
    assert!((snr / s.snr - 1.0).abs() < 0.05, "SNR {snr}");
    let fresh = signal_variance(&s.fields, 20_000, &mut rng);
    assert!((fresh / var(&d.signal) - 1.0).abs() < 0.05);
}

#[test]
fn generate_with_zero_samples_is_empty() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = make_setting(2, 5, 5, None, 10, &mut rng).unwrap();
    let d = generate(&s.fields, 0, 1.0, &mut rng);
    assert_eq!(d.n, 0);
    assert!(d.x.is_empty() && d.y.is_empty() && d.signal.is_empty());
}

#[test]
fn setting_ids_outside_range_fail() {
    assert!(setting_spec(0).is_err());
    assert!(setting_spec(10).is_err());
    assert_eq!(setting_spec(6).unwrap(), (Pattern::Horse, 5.0, true));
    assert_eq!(setting_spec(8).unwrap(), (Pattern::Six, 50.0, false));
}

#[test]
fn mask_text_round_trip_and_resampling() {
    let m = ShapeMask::six(15, 15).unwrap();
    let back = ShapeMask::parse(&m.to_text()).unwrap();
    assert_eq!(m, back);
    let small = m.resample(8, 6).unwrap();
    assert_eq!(small.dims(), (8, 6));
    assert!(small.active().iter().any(|&a| a));
    assert!(ShapeMask::from_rows(&[vec![0.5, 1.5]]).is_err());
}

#[test]
fn smooth_fields_rescale_onto_target_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let graph = build_grid_graph(&TensorShape::new(vec![6, 6]).unwrap());
    let field = smooth_field(&graph, 10, &mut rng).unwrap();
    let active = vec![true; 36];
    let (v, flat) = rescale_to(&field, 1.0, 2.0, &active);
    assert!(!flat);
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    assert!((lo - 1.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    let (c, flat) = rescale_to(&[3.0; 4], 0.0, 1.0, &[true; 4]);
    assert!(flat && c.iter().all(|&x| x == 0.5));
}

#[test]
fn toy_designs_have_expected_support() {
    let pc = toy_design(ToyKind::PiecewiseConstant);
    assert_eq!(pc.len(), 225);
    let mut levels: Vec<f64> = pc.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    assert_eq!(levels, vec![0.0, 3.0, 6.0, 9.0]);
    let ps = toy_design(ToyKind::PiecewiseSmooth);
    assert!((ps[7 + 7 * 15] - 6.0).abs() < 1e-12);
    assert_eq!(ps[0], 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, y) = generate_toy(&pc, 10, &mut rng);
    assert_eq!((x.len(), y.len()), (2250, 10));
}

#[test]
fn same_seed_gives_identical_data() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = make_setting(5, 10, 10, None, 20, &mut rng).unwrap();
        generate(&s.fields, 30, 0.5, &mut rng)
    };
    assert_eq!(run(), run());
}
