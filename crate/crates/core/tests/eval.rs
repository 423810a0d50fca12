use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use seqfuse::eval::{
    cmc, cmc_from_ranks, decade_grid, effort_report, mate_rank, peet_adaptive, peet_outlier, ranked,
    verification_rates, StageOutcomes,
};
use seqfuse::DedupDecision;

#[test]
fn cmc_from_example_ranks() {
    let c = cmc_from_ranks(&[1, 2, 2], 3).unwrap();
    assert_eq!(c.points, vec![1.0 / 3.0, 1.0, 1.0]);
    assert!(cmc_from_ranks(&[4], 3).is_err());
}

#[test]
fn ties_rank_the_mate_pessimistically() {
    assert_eq!(mate_rank(&[0.5, 0.5, 0.1], 0), 2);
    assert_eq!(mate_rank(&[0.5, 0.5, 0.5], 2), 3);
    let c = cmc(&[vec![0.9, 0.1], vec![0.3, 0.3]], &[Some(0), Some(1)]).unwrap();
    assert_eq!(c.points, vec![0.5, 1.0]);
    assert!(cmc(&[vec![0.1]], &[None]).is_err());
}

#[test]
fn eer_of_separated_and_overlapping_scores() {
    let r = verification_rates(&[0.8, 0.9], &[0.1, 0.2]).unwrap();
    assert_eq!(r.eer, 0.0);
    // every threshold trades one error against another: |FAR - FRR| is 0 at
    // t = 0.6 where FAR = FRR = 1/2
    let r = verification_rates(&[0.4, 0.6], &[0.5, 0.7]).unwrap();
    assert_abs_diff_eq!(r.eer, 0.5);
    let r = verification_rates(&[0.3, 0.6, 0.9, 1.0], &[0.1, 0.2, 0.4, 0.7]).unwrap();
    assert_abs_diff_eq!(r.eer, 0.25);
    assert_eq!(*r.far.last().unwrap(), 0.0);
    assert_eq!(*r.frr.last().unwrap(), 1.0);
    let same = verification_rates(&[0.2, 0.4, 0.6], &[0.2, 0.4, 0.6]).unwrap();
    assert_abs_diff_eq!(same.eer, 0.5);
}

#[test]
fn eer_reads_the_minimum_gap_not_the_first_zero_far() {
    // at t = 0.85 FAR = FRR = 1/2; at t = 0.9 FAR = 0, FRR = 1/2 gives a
    // smaller midpoint but a larger gap
    let r = verification_rates(&[0.9, 0.8], &[0.1, 0.85]).unwrap();
    assert_abs_diff_eq!(r.eer, 0.5);
    assert_eq!(r.eer_threshold, 0.85);
}

proptest! {
    #[test]
    fn far_and_frr_are_monotone(g in prop::collection::vec(0.0f64..1.0, 1..30), i in prop::collection::vec(0.0f64..1.0, 1..30)) {
        let r = verification_rates(&g, &i).unwrap();
        for w in r.far.windows(2) { prop_assert!(w[0] >= w[1]); }
        for w in r.frr.windows(2) { prop_assert!(w[0] <= w[1]); }
        prop_assert_eq!(r.far[0], 1.0);
        prop_assert_eq!(r.frr[0], 0.0);
        prop_assert!((0.0..=1.0).contains(&r.eer));
    }

    #[test]
    fn cmc_is_nondecreasing_and_ends_at_one(rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 1..20)) {
        let mates: Vec<Option<usize>> = (0..rows.len()).map(|i| Some(i % 5)).collect();
        let c = cmc(&rows, &mates).unwrap();
        for w in c.points.windows(2) { prop_assert!(w[0] <= w[1]); }
        prop_assert_eq!(*c.points.last().unwrap(), 1.0);
    }
}

fn decision(probe: usize, rank1: usize, stages_used: usize) -> DedupDecision<f64> {
    DedupDecision {
        probe,
        rank1,
        stages_used,
        early_terminated: stages_used < 3,
        fused_scores: vec![],
        verdicts: vec![],
        statistics: vec![],
    }
}

#[test]
fn effort_from_stage_counts() {
    let d = [decision(0, 0, 1), decision(1, 1, 1), decision(2, 0, 2), decision(3, 3, 3)];
    let r = effort_report(&d, 3, &[0, 1, 2, 3]).unwrap();
    assert_eq!(r.stages, vec![(2, 50.0), (3, 25.0)]);
    assert_eq!(r.rank1_percent, 75.0);
}

fn outcomes() -> StageOutcomes {
    StageOutcomes {
        stage: 1,
        statistic: vec![1e-9, 1e-4, 0.5, 1e-7],
        rank1_correct: vec![true, false, true, true],
        n_scores: vec![10; 4],
    }
}

#[test]
fn peet_adaptive_sweep() {
    let c = peet_adaptive(&outcomes(), &decade_grid(8)).unwrap();
    assert_eq!(c.points.len(), 9);
    // ascending eta: effort falls, error rises
    for w in c.points.windows(2) {
        assert!(w[0].0 < w[1].0 && w[0].1 >= w[1].1 && w[0].2 <= w[1].2);
    }
    let at = |eta: f64| c.points.iter().find(|p| p.0 == eta).copied().unwrap();
    assert_eq!(at(1e-8), (1e-8, 75.0, 0.0));
    assert_eq!(at(1e-6), (1e-6, 50.0, 0.0));
    assert_eq!(at(1e-3), (1e-3, 25.0, 25.0));
    assert_eq!(c.zero_error_effort(), Some(50.0));
}

#[test]
fn peet_outlier_sweep() {
    let o = StageOutcomes {
        stage: 1,
        statistic: vec![0.9, 0.05, 0.6],
        rank1_correct: vec![true, false, true],
        n_scores: vec![4; 3],
    };
    let c = peet_outlier(&o, &[1e-3, 0.05, 1.0]).unwrap();
    // critical values 0.9, 0.632, 0
    assert_eq!(c.points[0].1, 100.0);
    assert_abs_diff_eq!(c.points[1].1, 200.0 / 3.0);
    assert_eq!(c.points[2], (1.0, 0.0, 100.0 / 3.0));
}

#[test]
fn decade_grid_and_ranking() {
    assert_eq!(decade_grid(2), vec![1.0, 0.1, 0.01]);
    assert_eq!(ranked(&[0.2, 0.9, 0.2, 0.5]), vec![1, 3, 0, 2]);
}
