use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use seqfuse::normalize::{
    decimal_scale, double_sigmoid, estimate_stats, median_mad, minmax, tanh_norm, zscore, zscore_all, HampelParams,
    SigmoidParams,
};
use seqfuse::Error;

fn score_set() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1000.0, 2..60).prop_filter("not constant", |v| v.iter().any(|&x| x != v[0]))
}

proptest! {
    #[test]
    fn minmax_maps_sample_into_unit_interval(v in score_set()) {
        let st = estimate_stats(&v).unwrap();
        for &s in &v {
            let m = minmax(s, &st).unwrap();
            prop_assert!((0.0..=1.0).contains(&m));
        }
        prop_assert_eq!(minmax(st.min, &st).unwrap(), 0.0);
        prop_assert_eq!(minmax(st.max, &st).unwrap(), 1.0);
    }

    #[test]
    fn zscore_has_zero_mean_unit_sample_variance(v in score_set()) {
        let st = estimate_stats(&v).unwrap();
        let z = zscore_all(&v, &st).unwrap();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bounded_normalizers_stay_in_range(v in score_set(), t in 0.0f64..1000.0, r1 in 1.0f64..300.0, r2 in 1.0f64..300.0) {
        let st = estimate_stats(&v).unwrap();
        let hp = HampelParams::estimate(&v).unwrap();
        let sp = SigmoidParams::new(t, r1, r2).unwrap();
        for &s in &v {
            let th = tanh_norm(s, &st, &hp).unwrap();
            prop_assert!(th > 0.0 && th < 1.0, "tanh {th}");
            let ds = double_sigmoid(s, &sp);
            prop_assert!((0.0..=1.0).contains(&ds));
            if st.max > 0.0 {
                let d = decimal_scale(s, &st).unwrap();
                prop_assert!((0.0..=1.0).contains(&d));
            }
        }
    }

    #[test]
    fn normalizers_preserve_order(v in score_set()) {
        let st = estimate_stats(&v).unwrap();
        let hp = HampelParams::estimate(&v).unwrap();
        let sp = SigmoidParams::new(500.0, 100.0, 200.0).unwrap();
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        for w in s.windows(2) {
            prop_assert!(zscore(w[0], &st).unwrap() <= zscore(w[1], &st).unwrap());
            prop_assert!(minmax(w[0], &st).unwrap() <= minmax(w[1], &st).unwrap());
            prop_assert!(tanh_norm(w[0], &st, &hp).unwrap() <= tanh_norm(w[1], &st, &hp).unwrap());
            prop_assert!(double_sigmoid(w[0], &sp) <= double_sigmoid(w[1], &sp));
            if st.mad > 0.0 {
                prop_assert!(median_mad(w[0], &st).unwrap() <= median_mad(w[1], &st).unwrap());
            }
        }
    }
}

#[test]
fn double_sigmoid_is_one_half_at_operating_point() {
    let p = SigmoidParams::new(600.0, 160.0, 120.0).unwrap();
    assert_eq!(double_sigmoid(600.0, &p), 0.5);
    // one half-width below: 1 / (1 + e^2)
    assert_abs_diff_eq!(double_sigmoid(440.0, &p), 1.0 / (1.0 + 2f64.exp()), epsilon = 1e-15);
    assert_abs_diff_eq!(double_sigmoid(720.0, &p), 1.0 / (1.0 + (-2f64).exp()), epsilon = 1e-15);
}

#[test]
fn decimal_scaling_uses_ceiling_of_log10() {
    let st = estimate_stats(&[3.0, 250.0]).unwrap();
    assert_abs_diff_eq!(decimal_scale(250.0, &st).unwrap(), 0.25, epsilon = 1e-15);
    assert!(matches!(decimal_scale(-1.0, &st), Err(Error::Domain(_))));
}

#[test]
fn degenerate_inputs_are_rejected() {
    assert!(matches!(estimate_stats(&[2.0, 2.0]), Err(Error::Degenerate(_))));
    assert!(matches!(estimate_stats::<f64>(&[]), Err(Error::Degenerate(_))));
    assert!(SigmoidParams::new(0.0, 0.0, 1.0).is_err());
    assert!(HampelParams::new(2.0, 1.0, 3.0, 0.01).is_err());
}

#[test]
fn f32_matches_f64() {
    let v64 = [1.0, 4.0, 9.0, 16.0, 25.0];
    let v32: Vec<f32> = v64.iter().map(|&x| x as f32).collect();
    let a = estimate_stats(&v64).unwrap();
    let b = estimate_stats(&v32).unwrap();
    assert_abs_diff_eq!(a.std_dev as f32, b.std_dev, epsilon = 1e-5);
    assert_abs_diff_eq!(zscore(25.0, &a).unwrap() as f32, zscore(25.0f32, &b).unwrap(), epsilon = 1e-5);
}
