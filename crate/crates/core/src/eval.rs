//! Identification and verification metrics: CMC, FAR/FRR/EER, effort
//! accounting and predicted-effort/error (PEET) curves.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pipeline::{
    outlier_statistic, outlier_threshold, probe_rows, rank1, top_k, DedupDecision, FusionModel,
};
use crate::predictor::{verdict_for, StageVerdict};
use crate::scalar::{cmp, Real};
use crate::scores::ScoreSet;

/// What the axes of a curve mean, used as the CSV header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    Cmc,
    Det,
    Peet,
}

impl CurveKind {
    pub fn axes(self) -> (&'static str, &'static str) {
        match self {
            CurveKind::Cmc => ("rank", "identification_rate"),
            CurveKind::Det => ("far", "frr"),
            CurveKind::Peet => ("effort_percent", "error_percent"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalCurve {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
}

/// 1-based rank of the mate; the mate loses ties with equal-scored
/// non-mates.
pub fn mate_rank<T: Real>(scores: &[T], mate: usize) -> usize {
    let s = scores[mate];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, v)| i != mate && *v >= s)
        .count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmcCurve {
    /// Identification rate at ranks 1..=R.
    pub points: Vec<f64>,
}

impl CmcCurve {
    pub fn rank1(&self) -> f64 {
        self.points[0]
    }

    pub fn to_curve(&self) -> EvalCurve {
        EvalCurve {
            kind: CurveKind::Cmc,
            points: self
                .points
                .iter()
                .enumerate()
                .map(|(i, &p)| ((i + 1) as f64, p))
                .collect(),
        }
    }
}

/// CMC from mate ranks over a gallery of `gallery_size`.
pub fn cmc_from_ranks(ranks: &[usize], gallery_size: usize) -> Result<CmcCurve> {
    if ranks.is_empty() {
        return Err(Error::Empty("mate ranks"));
    }
    if gallery_size == 0 {
        return Err(Error::Empty("gallery"));
    }
    if let Some(&r) = ranks.iter().find(|&&r| r == 0 || r > gallery_size) {
        return Err(Error::Domain(format!("mate rank {r} outside 1..={gallery_size}")));
    }
    let mut counts = vec![0usize; gallery_size + 1];
    for &r in ranks {
        counts[r] += 1;
    }
    let n = ranks.len() as f64;
    let mut cum = 0;
    let points = counts[1..]
        .iter()
        .map(|&c| {
            cum += c;
            cum as f64 / n
        })
        .collect();
    Ok(CmcCurve { points })
}

/// CMC of fused (or raw) score vectors against ground-truth mates. `None`
/// for a mate means the probe has no mate in the gallery, which violates
/// the closed-set contract.
pub fn cmc<T: Real>(scores: &[Vec<T>], mates: &[Option<usize>]) -> Result<CmcCurve> {
    if scores.len() != mates.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            got: mates.len(),
        });
    }
    let gallery = scores.first().map_or(0, Vec::len);
    let ranks = scores
        .iter()
        .zip(mates)
        .enumerate()
        .map(|(p, (s, m))| {
            let m = m.ok_or_else(|| Error::MissingMate(p.to_string()))?;
            if m >= s.len() {
                return Err(Error::MissingMate(p.to_string()));
            }
            Ok(mate_rank(s, m))
        })
        .collect::<Result<Vec<_>>>()?;
    cmc_from_ranks(&ranks, gallery)
}

pub fn rank1_accuracy<T: Real>(scores: &[Vec<T>], mates: &[Option<usize>]) -> Result<f64> {
    Ok(cmc(scores, mates)?.rank1())
}

/// Unimodal CMC of one score matrix of a set (missing cells rank last).
pub fn cmc_of_matrix<T: Real>(set: &ScoreSet<T>, name: &str, probes: &[usize]) -> Result<CmcCurve> {
    let m = set
        .matrix(name)
        .ok_or_else(|| Error::Config(format!("unknown identifier '{name}'")))?;
    let rows: Vec<Vec<T>> = probes
        .iter()
        .map(|&p| m.row(p).iter().map(|c| c.unwrap_or(T::neg_infinity())).collect())
        .collect();
    let mates: Vec<Option<usize>> = probes.iter().map(|&p| Some(set.mates[p])).collect();
    cmc(&rows, &mates)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationRates {
    /// Ascending similarity thresholds.
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
    pub eer: f64,
    /// Threshold at which the EER was read off.
    pub eer_threshold: f64,
}

impl VerificationRates {
    pub fn trr(&self) -> Vec<f64> {
        self.far.iter().map(|f| 1.0 - f).collect()
    }

    pub fn tar(&self) -> Vec<f64> {
        self.frr.iter().map(|f| 1.0 - f).collect()
    }

    pub fn det_curve(&self) -> EvalCurve {
        EvalCurve {
            kind: CurveKind::Det,
            points: self.far.iter().copied().zip(self.frr.iter().copied()).collect(),
        }
    }
}

/// FAR(t) = share of impostor scores >= t, FRR(t) = share of genuine
/// scores < t, over every observed score plus one threshold above them
/// all. The EER is the FAR/FRR midpoint where |FAR - FRR| is smallest.
pub fn verification_rates<T: Real>(genuine: &[T], impostor: &[T]) -> Result<VerificationRates> {
    if genuine.is_empty() {
        return Err(Error::Empty("genuine scores"));
    }
    if impostor.is_empty() {
        return Err(Error::Empty("impostor scores"));
    }
    let mut g: Vec<f64> = genuine.iter().map(|v| v.as_f64()).collect();
    let mut im: Vec<f64> = impostor.iter().map(|v| v.as_f64()).collect();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = g.iter().chain(&im).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let (ng, ni) = (g.len() as f64, im.len() as f64);
    let mut far = Vec::with_capacity(thresholds.len());
    let mut frr = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        let below_g = g.partition_point(|&v| v < t);
        let below_i = im.partition_point(|&v| v < t);
        far.push((im.len() - below_i) as f64 / ni);
        frr.push(below_g as f64 / ng);
    }
    let best = (0..thresholds.len())
        .min_by(|&a, &b| (far[a] - frr[a]).abs().total_cmp(&(far[b] - frr[b]).abs()))
        .expect("at least one threshold");
    Ok(VerificationRates {
        eer: (far[best] + frr[best]) / 2.0,
        eer_threshold: thresholds[best],
        thresholds,
        far,
        frr,
    })
}

/// Genuine (mate) and impostor (non-mate) cells of score vectors.
pub fn split_genuine_impostor<T: Real>(scores: &[Vec<T>], mates: &[usize]) -> (Vec<T>, Vec<T>) {
    let mut genuine = Vec::with_capacity(scores.len());
    let mut impostor = Vec::new();
    for (row, &m) in scores.iter().zip(mates) {
        for (i, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            if i == m {
                genuine.push(v);
            } else {
                impostor.push(v);
            }
        }
    }
    (genuine, impostor)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffortReport {
    /// `(stage, percent of probes that reached it)` for stages 2..=n.
    pub stages: Vec<(usize, f64)>,
    pub rank1_percent: f64,
}

/// Share of probes that needed each stage beyond the first, and rank-1
/// accuracy of the final decisions.
pub fn effort_report<T: Real>(decisions: &[DedupDecision<T>], n_stages: usize, mates: &[usize]) -> Result<EffortReport> {
    if decisions.is_empty() {
        return Err(Error::Empty("decisions"));
    }
    let n = decisions.len() as f64;
    let stages = (2..=n_stages)
        .map(|s| {
            let c = decisions.iter().filter(|d| d.stages_used >= s).count();
            (s, 100.0 * c as f64 / n)
        })
        .collect();
    let correct = decisions
        .iter()
        .filter(|d| mates.get(d.probe) == Some(&d.rank1))
        .count();
    Ok(EffortReport {
        stages,
        rank1_percent: 100.0 * correct as f64 / n,
    })
}

/// Stage-wise decision statistic and rank-1 correctness of every probe,
/// from which a PEET curve can be swept.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcomes {
    pub stage: usize,
    /// Largest member probability (adaptive) or outlier statistic.
    pub statistic: Vec<f64>,
    pub rank1_correct: Vec<bool>,
    /// Number of scores the outlier statistic used, per probe.
    pub n_scores: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StageMethod {
    Adaptive,
    Outlier { n: Option<usize> },
}

/// Fuses the first `stage` available identifiers of each probe and
/// records the stopping statistic. Probes with fewer than `stage`
/// identifiers are skipped.
pub fn stage_outcomes<T: Real>(
    model: &FusionModel<T>,
    set: &ScoreSet<T>,
    probes: &[usize],
    stage: usize,
    method: StageMethod,
) -> Result<StageOutcomes> {
    if stage == 0 || stage >= model.n_stages() {
        return Err(Error::Config(format!(
            "stage must lie in 1..{}, got {stage}",
            model.n_stages()
        )));
    }
    let bound = model.bind(set)?;
    let rows: Vec<Option<(f64, bool, usize)>> = probes
        .par_iter()
        .map(|&p| {
            let rows = probe_rows(&bound, p);
            if rows.iter().filter(|r| r.is_some()).count() < stage {
                return Ok(None);
            }
            let fused = crate::pipeline::fuse_prefix(&rows, &model.stats, stage)?;
            let correct = rank1(&fused) == set.mates[p];
            let finite = fused.iter().filter(|v| v.is_finite()).count();
            let (stat, n) = match method {
                StageMethod::Adaptive => {
                    let ens = &model.ensembles[stage - 1];
                    (ens.max_probability(&top_k(&fused, model.k)?)?.as_f64(), 0)
                }
                StageMethod::Outlier { n } => (
                    outlier_statistic(&fused, n)?.as_f64(),
                    n.unwrap_or(finite),
                ),
            };
            Ok(Some((stat, correct, n)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = StageOutcomes {
        stage,
        statistic: Vec::new(),
        rank1_correct: Vec::new(),
        n_scores: Vec::new(),
    };
    for (s, c, n) in rows.into_iter().flatten() {
        out.statistic.push(s);
        out.rank1_correct.push(c);
        out.n_scores.push(n);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeetCurve {
    /// `(parameter, effort %, error %)` sorted by ascending parameter.
    pub points: Vec<(f64, f64, f64)>,
}

impl PeetCurve {
    pub fn to_curve(&self) -> EvalCurve {
        EvalCurve {
            kind: CurveKind::Peet,
            points: self.points.iter().map(|&(_, e, r)| (e, r)).collect(),
        }
    }

    /// Smallest effort among zero-error points.
    pub fn zero_error_effort(&self) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.2 == 0.0)
            .map(|p| p.1)
            .min_by(f64::total_cmp)
    }
}

fn sweep<F>(outcomes: &StageOutcomes, grid: &[f64], terminates: F) -> Result<PeetCurve>
where
    F: Fn(f64, f64, usize) -> Result<bool>,
{
    if grid.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let n = outcomes.statistic.len();
    if n == 0 {
        return Err(Error::Empty("probes reaching the stage"));
    }
    let mut params = grid.to_vec();
    params.sort_by(f64::total_cmp);
    let points = params
        .into_iter()
        .map(|param| {
            let mut cont = 0;
            let mut wrong = 0;
            for i in 0..n {
                if terminates(param, outcomes.statistic[i], outcomes.n_scores[i])? {
                    wrong += usize::from(!outcomes.rank1_correct[i]);
                } else {
                    cont += 1;
                }
            }
            Ok((param, 100.0 * cont as f64 / n as f64, 100.0 * wrong as f64 / n as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PeetCurve { points })
}

/// PEET over the ensemble threshold `eta`.
pub fn peet_adaptive(outcomes: &StageOutcomes, eta_grid: &[f64]) -> Result<PeetCurve> {
    sweep(outcomes, eta_grid, |eta, p, _| Ok(verdict_for(p, eta) == StageVerdict::Terminate))
}

/// PEET over the outlier-test significance level `alpha`.
pub fn peet_outlier(outcomes: &StageOutcomes, alpha_grid: &[f64]) -> Result<PeetCurve> {
    sweep(outcomes, alpha_grid, |alpha, z, n| Ok(z > outlier_threshold(alpha, n)?))
}

/// PEET for any stage method, evaluated directly on a model and dataset.
pub fn peet<T: Real>(
    model: &FusionModel<T>,
    set: &ScoreSet<T>,
    probes: &[usize],
    stage: usize,
    method: StageMethod,
    grid: &[f64],
) -> Result<PeetCurve> {
    let outcomes = stage_outcomes(model, set, probes, stage, method)?;
    match method {
        StageMethod::Adaptive => peet_adaptive(&outcomes, grid),
        StageMethod::Outlier { .. } => peet_outlier(&outcomes, grid),
    }
}

/// `10^0, 10^-1, ..., 10^-decades`.
pub fn decade_grid(decades: u32) -> Vec<f64> {
    (0..=decades).map(|d| 10f64.powi(-(d as i32))).collect()
}

/// Verdict implied by a PEET parameter for one probe, exposed for callers
/// that want per-probe detail.
pub fn adaptive_verdict(max_probability: f64, eta: f64) -> StageVerdict {
    verdict_for(max_probability, eta)
}

/// Sorts scores descending (used when ranking is shown to users).
pub fn ranked<T: Real>(scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| cmp(&scores[b], &scores[a]).then(a.cmp(&b)));
    idx
}
