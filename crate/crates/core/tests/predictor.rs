use std::collections::HashSet;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::Rng;
use seqfuse::predictor::{
    bootstrap_sample, cost, gradient, logistic, train, train_ensemble, verdict_for, EnsembleConfig, LogisticModel,
    TrainConfig, TrainingSet,
};
use seqfuse::rng::seeded;
use seqfuse::StageVerdict;

fn random_set(n: usize, k: usize, seed: u64) -> TrainingSet<f64> {
    let mut rng = seeded(seed);
    let features: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let labels = (0..n).map(|_| rng.random_bool(0.4)).collect();
    TrainingSet::new(features, labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), k in 1usize..6) {
        let data = random_set(40, k, seed);
        let mut rng = seeded(seed ^ 1);
        let model = LogisticModel::new((0..=k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let g = gradient(&model, &data).unwrap();
        let h = 1e-5;
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &gi) in g.iter().enumerate() {
            let mut p = model.clone();
            let mut q = model.clone();
            p.weights[i] += h;
            q.weights[i] -= h;
            let fd = (cost(&p, &data).unwrap() - cost(&q, &data).unwrap()) / (2.0 * h);
            num += (fd - gi).powi(2);
            den += fd.powi(2).max(gi.powi(2));
        }
        prop_assert!(num.sqrt() <= 1e-5 * den.sqrt().max(1e-8));
    }

    #[test]
    fn logistic_is_bounded_and_symmetric(z in -800.0f64..800.0) {
        let p = logistic(z);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + logistic(-z) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn verdict_is_monotone_in_eta(p in 0.0f64..1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if verdict_for(p, lo) == StageVerdict::Terminate {
            prop_assert_eq!(verdict_for(p, hi), StageVerdict::Terminate);
        }
    }
}

#[test]
fn cost_at_zero_weights_is_ln_2() {
    let data = random_set(25, 3, 9);
    let j = cost(&LogisticModel::zeros(3), &data).unwrap();
    assert!((j - std::f64::consts::LN_2).abs() <= 1e-12);
}

#[test]
fn cost_is_finite_for_extreme_margins() {
    let data = TrainingSet::new(vec![vec![1.0], vec![-1.0]], vec![true, false]).unwrap();
    let model = LogisticModel::new(vec![0.0, 1000.0]).unwrap();
    assert!(cost(&model, &data).unwrap() < 1e-300);
    let wrong = LogisticModel::new(vec![0.0, -1000.0]).unwrap();
    assert_abs_diff_eq!(cost(&wrong, &data).unwrap(), 1000.0, epsilon = 1e-9);
}

#[test]
fn separable_data_is_classified() {
    let mut rng = seeded(3);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..200 {
        let x: f64 = rng.random_range(-2.0..2.0);
        let y: f64 = rng.random_range(-2.0..2.0);
        if (x + y).abs() < 0.2 {
            continue;
        }
        features.push(vec![x, y]);
        labels.push(x + y > 0.0);
    }
    let data = TrainingSet::new(features, labels).unwrap();
    let report = train(&data, &TrainConfig::default()).unwrap();
    assert!(report.final_cost < report.initial_cost);
    let correct = data
        .features
        .iter()
        .zip(&data.labels)
        .filter(|(x, &l)| (report.model.predict(x).unwrap() > 0.5) == l)
        .count();
    assert_eq!(correct, data.len());
}

#[test]
fn training_converges_on_overlapping_classes() {
    let data = random_set(300, 2, 4);
    let report = train(&data, &TrainConfig::default()).unwrap();
    assert!(report.converged);
    let g = gradient(&report.model, &data).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-3), "{g:?}");
}

#[test]
fn bootstrap_covers_about_63_percent() {
    let n = 100_000;
    let idx = bootstrap_sample(n, 42);
    assert_eq!(idx.len(), n);
    assert!(idx.iter().all(|&i| i < n));
    let unique = idx.iter().collect::<HashSet<_>>().len() as f64 / n as f64;
    // 1 - 1/e
    assert!((unique - 0.632).abs() < 0.02, "{unique}");
    assert_eq!(idx, bootstrap_sample(n, 42));
    assert_ne!(idx, bootstrap_sample(n, 43));
}

#[test]
fn ensemble_is_deterministic_across_thread_counts() {
    let data = random_set(120, 5, 8);
    let cfg = EnsembleConfig {
        m: 12,
        ..EnsembleConfig::default()
    };
    let a = train_ensemble(&data, &cfg, 77).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| train_ensemble(&data, &cfg, 77).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.m(), 12);
    assert_eq!(a.k(), 5);
    assert_ne!(a, train_ensemble(&data, &cfg, 78).unwrap());
}

#[test]
fn veto_requires_every_member_below_eta() {
    let data = random_set(120, 5, 8);
    let cfg = EnsembleConfig {
        m: 8,
        ..EnsembleConfig::default()
    };
    let ens = train_ensemble(&data, &cfg, 1).unwrap();
    let x = &data.features[0];
    let probs = ens.member_probabilities(x).unwrap();
    let max = ens.max_probability(x).unwrap();
    assert_eq!(max, probs.iter().copied().fold(0.0, f64::max));
    assert_eq!(ens.decide_at(x, max).unwrap(), StageVerdict::Terminate);
    let just_below = max * (1.0 - 1e-12);
    assert_eq!(ens.decide_at(x, just_below).unwrap(), StageVerdict::Continue);
    assert_eq!(ens.decide_at(x, 0.0).unwrap(), StageVerdict::Continue);
}

#[test]
fn eta_zero_never_terminates() {
    assert_eq!(verdict_for(0.0, 0.0), StageVerdict::Continue);
    assert_eq!(verdict_for(0.0, 1e-300), StageVerdict::Terminate);
}

#[test]
fn ensemble_config_errors() {
    let data = random_set(20, 2, 1);
    let bad_k = EnsembleConfig { k: 3, ..EnsembleConfig::default() };
    assert!(train_ensemble(&data, &bad_k, 0).is_err());
    let bad_eta = EnsembleConfig { k: 2, eta: 1.5, ..EnsembleConfig::default() };
    assert!(train_ensemble(&data, &bad_eta, 0).is_err());
    let empty = EnsembleConfig { k: 2, m: 0, ..EnsembleConfig::default() };
    assert!(train_ensemble(&data, &empty, 0).is_err());
}
