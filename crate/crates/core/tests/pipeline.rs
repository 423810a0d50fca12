use proptest::prelude::*;
use seqfuse::datagen::{generate_dataset, make_folds, DatasetConfig};
use seqfuse::eval::effort_report;
use seqfuse::normalize::NormStats;
use seqfuse::pipeline::{
    dedup_all, full_fusion, fuse_prefix, outlier_statistic, outlier_stop, outlier_threshold, probe_rows, quality_gate,
    top_k, train_pipeline, PipelineConfig,
};
use seqfuse::{QualityLevel, ScoreSet, StageVerdict, StopRule};

fn small_set(seed: u64) -> ScoreSet<f64> {
    let cfg = DatasetConfig {
        subjects: 120,
        ..DatasetConfig::default()
    };
    generate_dataset(&cfg, seed).unwrap().scores
}

fn quick_config() -> PipelineConfig {
    let mut pc = PipelineConfig::default();
    pc.ensemble.m = 6;
    pc
}

#[test]
fn outlier_rule_examples() {
    // z = 9 / 13 against 1 - 0.05^(1/3) = 0.632
    let z = outlier_statistic::<f64>(&[10.0, 1.0, 1.0, 1.0], None).unwrap();
    assert!((z - 9.0 / 13.0).abs() < 1e-15);
    assert_eq!(outlier_stop(&[10.0, 1.0, 1.0, 1.0], 0.05, None).unwrap(), StageVerdict::Terminate);
    assert_eq!(outlier_stop(&[2.0, 1.9, 1.8, 1.7], 0.05, None).unwrap(), StageVerdict::Continue);
    // negative scores are shifted by the minimum
    let shifted = outlier_statistic::<f64>(&[5.0, -2.0, -3.0], None).unwrap();
    assert!((shifted - 7.0 / 9.0).abs() < 1e-15);
    assert!(outlier_threshold(0.0, 5).is_err());
    assert!(outlier_statistic(&[1.0], None).is_err());
}

proptest! {
    #[test]
    fn outlier_threshold_decreases_with_alpha(a in 1e-9f64..1.0, b in 1e-9f64..1.0, n in 2usize..500) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let tl = outlier_threshold(lo, n).unwrap();
        let th = outlier_threshold(hi, n).unwrap();
        prop_assert!(tl >= th);
        prop_assert!((0.0..1.0).contains(&th));
    }

    #[test]
    fn top_k_is_sorted_prefix(v in prop::collection::vec(-5.0f64..5.0, 1..40), k in 1usize..10) {
        if k > v.len() {
            prop_assert!(top_k(&v, k).is_err());
        } else {
            let t = top_k(&v, k).unwrap();
            let mut s = v.clone();
            s.sort_by(|a, b| b.total_cmp(a));
            prop_assert_eq!(&t[..], &s[..k]);
        }
    }
}

#[test]
fn quality_gate_continues_at_or_below_threshold() {
    let q = |l| QualityLevel::new(l).unwrap();
    assert_eq!(quality_gate(q(1), q(3)), StageVerdict::Terminate);
    assert_eq!(quality_gate(q(3), q(3)), StageVerdict::Continue);
    assert_eq!(quality_gate(q(5), q(3)), StageVerdict::Continue);
    assert!(QualityLevel::new(0).is_err() && QualityLevel::new(6).is_err());
}

#[test]
fn prefix_fusion_averages_zscores() {
    let a = [Some(1.0), Some(3.0)];
    let b = [Some(10.0), None];
    let rows = vec![Some(&a[..]), Some(&b[..])];
    let stats = vec![NormStats::from_mean_std(2.0, 1.0), NormStats::from_mean_std(0.0, 5.0)];
    assert_eq!(fuse_prefix(&rows, &stats, 1).unwrap(), vec![-1.0, 1.0]);
    // per-cell mean over the scores present: a missing cell is not penalized
    assert_eq!(full_fusion(&rows, &stats).unwrap(), vec![0.5, 1.0]);
}

#[test]
fn exhausted_adaptive_matches_full_fusion() {
    let set = small_set(4);
    let probes: Vec<usize> = (0..set.n_probes()).collect();
    let trained = train_pipeline(&set, &probes, &quick_config(), 1).unwrap();
    let model = &trained.model;
    let never = dedup_all(model, &set, &probes, &StopRule::Adaptive { eta: Some(0.0) }).unwrap();
    let full = dedup_all(model, &set, &probes, &StopRule::Full).unwrap();
    let bound = model.bind(&set).unwrap();
    for (a, b) in never.iter().zip(&full) {
        assert_eq!(a.stages_used, model.n_stages());
        assert!(!a.early_terminated);
        assert_eq!(a.rank1, b.rank1);
        let direct = full_fusion(&probe_rows(&bound, a.probe), &model.stats).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.fused_scores), bits(&direct));
    }
}

#[test]
fn larger_eta_never_increases_effort() {
    let set = small_set(5);
    let folds = make_folds(set.n_probes(), 2, 3).unwrap();
    let trained = train_pipeline(&set, &folds[0], &quick_config(), 2).unwrap();
    let model = &trained.model;
    assert_eq!(model.ensembles.len(), model.n_stages() - 1);
    let mut last = f64::INFINITY;
    for eta in [1e-12, 1e-6, 1e-3, 0.5, 1.0] {
        let d = dedup_all(model, &set, &folds[1], &StopRule::Adaptive { eta: Some(eta) }).unwrap();
        let r = effort_report(&d, model.n_stages(), &set.mates).unwrap();
        let effort = r.stages[0].1;
        assert!(effort <= last);
        last = effort;
    }
    assert_eq!(last, 0.0, "eta = 1 stops every probe after one stage");
}

#[test]
fn quality_rule_uses_gate_only_on_first_stage() {
    let set = small_set(6);
    let probes: Vec<usize> = (0..set.n_probes()).collect();
    let trained = train_pipeline(&set, &probes, &quick_config(), 3).unwrap();
    let q: Vec<QualityLevel> = (0..set.n_probes()).map(|i| QualityLevel::new(1 + (i % 5) as u8).unwrap()).collect();
    let set = set.with_quality(q.clone()).unwrap();
    let threshold = QualityLevel::new(3).unwrap();
    let d = dedup_all(&trained.model, &set, &probes, &StopRule::Quality { threshold }).unwrap();
    for x in &d {
        let expect = if q[x.probe].level() >= 3 { trained.model.n_stages() } else { 1 };
        assert_eq!(x.stages_used, expect);
    }
}

#[test]
fn training_is_deterministic_and_honours_fixed_order() {
    let set = small_set(7);
    let probes: Vec<usize> = (0..60).collect();
    let a = train_pipeline(&set, &probes, &quick_config(), 9).unwrap();
    let b = train_pipeline(&set, &probes, &quick_config(), 9).unwrap();
    assert_eq!(a.model, b.model);
    let mut fixed = quick_config();
    fixed.stage_order = Some(vec!["face".into(), "fingerprint".into()]);
    let f = train_pipeline(&set.select(&["fingerprint", "face"]).unwrap(), &probes, &fixed, 9).unwrap();
    let names: Vec<&str> = f.model.stage_order.iter().map(|i| i.name.as_str()).collect();
    assert_eq!(names, ["face", "fingerprint"]);
    let mut bad = quick_config();
    bad.stage_order = Some(vec!["iris".into()]);
    assert!(train_pipeline(&set, &probes, &bad, 9).is_err());
}
