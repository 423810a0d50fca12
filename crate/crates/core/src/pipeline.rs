//! Adaptive sequential de-duplication.
//!
//! Identifiers are matched one stage at a time. After each stage the
//! z-normalized scores seen so far are averaged, the top-k fused scores are
//! handed to that stage's veto ensemble, and fusion stops as soon as every
//! member agrees the rank-1 candidate is the mate. The same driver also runs
//! the baselines: the single-upper-outlier test, the quality gate and full
//! fusion.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::normalize::{estimate_stats, NormStats};
use crate::predictor::{
    train_ensemble, verdict_for, EnsembleConfig, StageVerdict, TrainingSet, VetoEnsemble,
};
use crate::rng::derive_seed;
use crate::scalar::{cmp, Real};
use crate::scores::{IdentifierId, QualityLevel, ScoreMatrix, ScoreSet};

/// One probe's raw score rows, in stage order. `None` marks an identifier
/// the probe does not have.
pub type ProbeRows<'a, T> = Vec<Option<&'a [Option<T>]>>;

#[derive(Clone, Debug, PartialEq)]
pub struct FusionModel<T> {
    pub stage_order: Vec<IdentifierId>,
    /// Raw-score statistics of each stage's identifier, aligned with
    /// `stage_order`.
    pub stats: Vec<NormStats<T>>,
    /// One ensemble per stage except the last.
    pub ensembles: Vec<VetoEnsemble<T>>,
    pub k: usize,
    pub m: usize,
    pub eta: T,
}

impl<T: Real> FusionModel<T> {
    pub fn n_stages(&self) -> usize {
        self.stage_order.len()
    }

    /// Maps stage order onto the matrices of `set`.
    pub fn bind<'a>(&self, set: &'a ScoreSet<T>) -> Result<Vec<&'a ScoreMatrix<T>>> {
        self.stage_order
            .iter()
            .map(|id| {
                set.matrix(&id.name).ok_or_else(|| {
                    Error::Config(format!("model identifier '{}' missing from scores", id.name))
                })
            })
            .collect()
    }

    /// Same model with a different decision threshold.
    pub fn with_eta(&self, eta: T) -> Self {
        let mut m = self.clone();
        m.eta = eta;
        m.ensembles.iter_mut().for_each(|e| e.eta = eta);
        m
    }
}

/// Rows of `probe` from already bound matrices.
pub fn probe_rows<'a, T: Real>(bound: &[&'a ScoreMatrix<T>], probe: usize) -> ProbeRows<'a, T> {
    bound
        .iter()
        .map(|m| m.has_probe(probe).then(|| m.row(probe)))
        .collect()
}

/// Running per-cell sum of z-normalized scores.
struct FusedAccumulator<T> {
    sum: Vec<T>,
    count: Vec<u32>,
    used: usize,
}

impl<T: Real> FusedAccumulator<T> {
    fn new(n_gallery: usize) -> Self {
        FusedAccumulator {
            sum: vec![T::zero(); n_gallery],
            count: vec![0; n_gallery],
            used: 0,
        }
    }

    fn add(&mut self, row: &[Option<T>], stats: &NormStats<T>) -> Result<()> {
        if row.len() != self.sum.len() {
            return Err(Error::LengthMismatch {
                expected: self.sum.len(),
                got: row.len(),
            });
        }
        if !(stats.std_dev > T::zero()) {
            return Err(Error::Degenerate("identifier standard deviation is zero".into()));
        }
        for ((s, c), cell) in self.sum.iter_mut().zip(&mut self.count).zip(row) {
            if let Some(v) = cell {
                *s = *s + (*v - stats.mean) / stats.std_dev;
                *c += 1;
            }
        }
        self.used += 1;
        Ok(())
    }

    /// Cell-wise mean; cells never scored are `-inf`.
    fn fused(&self) -> Vec<T> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| {
                if c == 0 {
                    T::neg_infinity()
                } else {
                    s / T::from_count(c as usize)
                }
            })
            .collect()
    }
}

fn gallery_len<T>(rows: &[Option<&[Option<T>]>]) -> Result<usize> {
    rows.iter()
        .flatten()
        .map(|r| r.len())
        .next()
        .ok_or(Error::Empty("no identifier available for probe"))
}

/// Mean of the z-normalized score vectors of the first `j` available
/// identifiers.
pub fn fuse_prefix<T: Real>(rows: &[Option<&[Option<T>]>], stats: &[NormStats<T>], j: usize) -> Result<Vec<T>> {
    if rows.len() != stats.len() {
        return Err(Error::LengthMismatch {
            expected: stats.len(),
            got: rows.len(),
        });
    }
    if j == 0 {
        return Err(Error::Empty("fusion prefix of length zero"));
    }
    let mut acc = FusedAccumulator::new(gallery_len(rows)?);
    for (row, st) in rows.iter().zip(stats) {
        if acc.used == j {
            break;
        }
        if let Some(r) = row {
            acc.add(r, st)?;
        }
    }
    if acc.used < j {
        return Err(Error::Config(format!(
            "prefix {j} requested but only {} identifiers available",
            acc.used
        )));
    }
    Ok(acc.fused())
}

/// Equal-weight sum-rule fusion of every available identifier.
pub fn full_fusion<T: Real>(rows: &[Option<&[Option<T>]>], stats: &[NormStats<T>]) -> Result<Vec<T>> {
    let available = rows.iter().filter(|r| r.is_some()).count();
    fuse_prefix(rows, stats, available)
}

/// Gallery index of the highest score; ties go to the lowest index.
pub fn rank1<T: Real>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// The `k` largest scores in descending order. Unscored cells are replaced
/// by the lowest finite score.
pub fn top_k<T: Real>(scores: &[T], k: usize) -> Result<Vec<T>> {
    if scores.len() < k {
        return Err(Error::Config(format!(
            "gallery of {} is smaller than k = {k}",
            scores.len()
        )));
    }
    let floor = scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(T::infinity(), T::min);
    let floor = if floor.is_finite() { floor } else { T::zero() };
    let mut v: Vec<T> = scores
        .iter()
        .map(|&s| if s.is_finite() { s } else { floor })
        .collect();
    if k < v.len() {
        v.select_nth_unstable_by(k, |a, b| cmp(b, a));
        v.truncate(k);
    }
    v.sort_by(|a, b| cmp(b, a));
    Ok(v)
}

/// Critical value `1 - alpha^(1 / (n - 1))` of the upper-outlier test.
pub fn outlier_threshold<T: Real>(alpha: T, n: usize) -> Result<T> {
    if n < 2 {
        return Err(Error::Config(format!("outlier test needs n >= 2, got {n}")));
    }
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(T::one() - alpha.powf(T::one() / T::from_count(n - 1)))
}

/// Gap between the two highest scores relative to the sum of the top `n`.
/// Scores are shifted by the minimum first when any is negative.
pub fn outlier_statistic<T: Real>(scores: &[T], n: Option<usize>) -> Result<T> {
    let finite: Vec<T> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    let n = n.unwrap_or(finite.len());
    if n < 2 {
        return Err(Error::Config(format!("outlier test needs n >= 2, got {n}")));
    }
    if finite.len() < n {
        return Err(Error::Config(format!(
            "outlier test over top {n} scores but only {} available",
            finite.len()
        )));
    }
    let min = finite.iter().copied().fold(T::infinity(), T::min);
    let shift = if min < T::zero() { min } else { T::zero() };
    let mut top = top_k(&finite, n)?;
    top.iter_mut().for_each(|s| *s = *s - shift);
    let total: T = top.iter().copied().sum();
    if !(total > T::zero()) {
        return Ok(T::zero());
    }
    Ok((top[0] - top[1]) / total)
}

pub fn outlier_stop<T: Real>(scores: &[T], alpha: T, n: Option<usize>) -> Result<StageVerdict> {
    let count = n.unwrap_or_else(|| scores.iter().filter(|s| s.is_finite()).count());
    let z = outlier_statistic(scores, n)?;
    let critical = outlier_threshold(alpha, count)?;
    Ok(if z > critical {
        StageVerdict::Terminate
    } else {
        StageVerdict::Continue
    })
}

/// Further identifiers are fused when the probe quality is at or worse
/// than the threshold level.
pub fn quality_gate(probe: QualityLevel, threshold: QualityLevel) -> StageVerdict {
    if probe.level() >= threshold.level() {
        StageVerdict::Continue
    } else {
        StageVerdict::Terminate
    }
}

/// Stopping rule applied between stages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule<T> {
    /// Veto ensembles at the model's threshold, or at `eta` when given.
    Adaptive { eta: Option<T> },
    /// Upper-outlier test on the fused scores.
    Outlier { alpha: T, n: Option<usize> },
    /// Quality gate on the first stage; gated probes fuse everything.
    Quality { threshold: QualityLevel },
    /// Never stop early.
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DedupDecision<T> {
    pub probe: usize,
    pub rank1: usize,
    pub stages_used: usize,
    pub early_terminated: bool,
    pub fused_scores: Vec<T>,
    /// Verdict after each consumed stage except the last.
    pub verdicts: Vec<StageVerdict>,
    /// Statistic behind each verdict: the largest member probability for the
    /// adaptive rule, the outlier statistic for the outlier rule.
    pub statistics: Vec<T>,
}

/// De-duplicates one probe.
pub fn dedup_probe<T: Real>(
    model: &FusionModel<T>,
    probe: usize,
    rows: &[Option<&[Option<T>]>],
    quality: Option<QualityLevel>,
    rule: &StopRule<T>,
) -> Result<DedupDecision<T>> {
    if rows.len() != model.n_stages() {
        return Err(Error::LengthMismatch {
            expected: model.n_stages(),
            got: rows.len(),
        });
    }
    let n_gallery = gallery_len(rows)?;
    if matches!(rule, StopRule::Adaptive { .. }) && n_gallery < model.k {
        return Err(Error::Config(format!(
            "gallery of {n_gallery} is smaller than k = {}",
            model.k
        )));
    }
    let available = rows.iter().filter(|r| r.is_some()).count();
    let mut acc = FusedAccumulator::new(n_gallery);
    let mut verdicts = Vec::new();
    let mut statistics = Vec::new();
    let mut gate_passed = false;
    let mut fused = Vec::new();

    for (row, st) in rows.iter().zip(&model.stats) {
        let Some(row) = row else { continue };
        acc.add(row, st)?;
        fused = acc.fused();
        let j = acc.used;
        if j >= available {
            break;
        }
        let verdict = match rule {
            StopRule::Full => StageVerdict::Continue,
            StopRule::Adaptive { eta } => match model.ensembles.get(j - 1) {
                Some(ens) => {
                    let p = ens.max_probability(&top_k(&fused, model.k)?)?;
                    statistics.push(p);
                    verdict_for(p, eta.unwrap_or(ens.eta))
                }
                None => StageVerdict::Continue,
            },
            StopRule::Outlier { alpha, n } => {
                let z = outlier_statistic(&fused, *n)?;
                statistics.push(z);
                outlier_stop(&fused, *alpha, *n)?
            }
            StopRule::Quality { threshold } => {
                if gate_passed {
                    StageVerdict::Continue
                } else {
                    gate_passed = true;
                    quality.map_or(StageVerdict::Continue, |q| quality_gate(q, *threshold))
                }
            }
        };
        verdicts.push(verdict);
        if verdict == StageVerdict::Terminate {
            break;
        }
    }
    let early_terminated = verdicts.last() == Some(&StageVerdict::Terminate);
    Ok(DedupDecision {
        probe,
        rank1: rank1(&fused),
        stages_used: acc.used,
        early_terminated,
        fused_scores: fused,
        verdicts,
        statistics,
    })
}

/// De-duplicates the given probes in parallel; results come back in probe
/// order.
pub fn dedup_all<T: Real>(
    model: &FusionModel<T>,
    set: &ScoreSet<T>,
    probes: &[usize],
    rule: &StopRule<T>,
) -> Result<Vec<DedupDecision<T>>> {
    let bound = model.bind(set)?;
    probes
        .par_iter()
        .map(|&p| {
            let rows = probe_rows(&bound, p);
            let q = set.quality.as_ref().map(|q| q[p]);
            dedup_probe(model, p, &rows, q, rule)
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct PipelineConfig {
    pub ensemble: EnsembleConfig,
    /// Fixed stage order by identifier name; greedy ordering when `None`.
    pub stage_order: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSummary {
    pub identifier: String,
    pub training_probes: usize,
    /// Training probes the stage ensemble would terminate at the model's
    /// threshold.
    pub terminated: usize,
    /// Terminated training probes whose rank-1 was not the mate.
    pub wrong: usize,
}

#[derive(Clone, Debug)]
pub struct TrainedPipeline<T> {
    pub model: FusionModel<T>,
    pub summaries: Vec<StageSummary>,
    pub warnings: Vec<String>,
}

/// Training probes with precomputed raw rows, shared by stage ordering and
/// ensemble training.
struct TrainingView<'a, T> {
    matrices: Vec<&'a ScoreMatrix<T>>,
    stats: Vec<NormStats<T>>,
    probes: Vec<usize>,
    mates: Vec<usize>,
}

impl<T: Real> TrainingView<'_, T> {
    /// Top-k features and "rank-1 is not the mate" labels for the fused
    /// prefix `prefix` (indices into `matrices`).
    fn stage_data(&self, prefix: &[usize], k: usize) -> Result<TrainingSet<T>> {
        type Row<T> = Result<Option<(Vec<T>, bool)>>;
        let rows: Vec<Row<T>> = self
            .probes
            .par_iter()
            .zip(&self.mates)
            .map(|(&p, &mate)| {
                let mut acc: Option<FusedAccumulator<T>> = None;
                for &i in prefix {
                    let m = self.matrices[i];
                    if m.has_probe(p) {
                        acc.get_or_insert_with(|| FusedAccumulator::new(m.n_gallery()))
                            .add(m.row(p), &self.stats[i])?;
                    }
                }
                let Some(acc) = acc else { return Ok(None) };
                let fused = acc.fused();
                Ok(Some((top_k(&fused, k)?, rank1(&fused) != mate)))
            })
            .collect();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for r in rows {
            if let Some((f, y)) = r? {
                features.push(f);
                labels.push(y);
            }
        }
        TrainingSet::new(features, labels)
    }

    fn unimodal_accuracy(&self, i: usize) -> f64 {
        let m = self.matrices[i];
        let correct = self
            .probes
            .iter()
            .zip(&self.mates)
            .filter(|(&p, &mate)| {
                let row: Vec<T> = m
                    .row(p)
                    .iter()
                    .map(|c| c.unwrap_or(T::neg_infinity()))
                    .collect();
                m.has_probe(p) && rank1(&row) == mate
            })
            .count();
        correct as f64 / self.probes.len().max(1) as f64
    }
}

fn stage_seed(seed: u64, prefix: &[usize], view: &TrainingView<'_, impl Real>) -> u64 {
    let label: Vec<&str> = prefix
        .iter()
        .map(|&i| view.matrices[i].identifier.name.as_str())
        .collect();
    derive_seed(seed, &format!("stage:{}", label.join(">")))
}

fn evaluate_on_training<T: Real>(ens: &VetoEnsemble<T>, data: &TrainingSet<T>) -> Result<(usize, usize)> {
    let mut terminated = 0;
    let mut wrong = 0;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        if ens.decide(x)? == StageVerdict::Terminate {
            terminated += 1;
            wrong += usize::from(y);
        }
    }
    Ok((terminated, wrong))
}

struct OrderedStages<T> {
    order: Vec<usize>,
    ensembles: Vec<VetoEnsemble<T>>,
    summaries: Vec<StageSummary>,
    warnings: Vec<String>,
}

fn train_stage<T: Real>(
    view: &TrainingView<'_, T>,
    prefix: &[usize],
    config: &EnsembleConfig,
    seed: u64,
) -> Result<(VetoEnsemble<T>, StageSummary)> {
    let data = view.stage_data(prefix, config.k)?;
    let ens = train_ensemble(&data, config, stage_seed(seed, prefix, view))?;
    let (terminated, wrong) = evaluate_on_training(&ens, &data)?;
    let summary = StageSummary {
        identifier: view.matrices[*prefix.last().expect("nonempty prefix")]
            .identifier
            .name
            .clone(),
        training_probes: data.len(),
        terminated,
        wrong,
    };
    Ok((ens, summary))
}

/// Greedy stage ordering: each position takes the identifier whose ensemble
/// (on the fused prefix) terminates the most training probes without a
/// single wrong termination. Ties keep declared order.
fn order_greedy<T: Real>(view: &TrainingView<'_, T>, config: &EnsembleConfig, seed: u64) -> Result<OrderedStages<T>> {
    let n = view.matrices.len();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut ensembles = Vec::new();
    let mut summaries = Vec::new();
    let mut warnings = Vec::new();

    while remaining.len() > 1 {
        let mut best: Option<(usize, VetoEnsemble<T>, StageSummary)> = None;
        for (pos, &cand) in remaining.iter().enumerate() {
            let mut prefix = order.clone();
            prefix.push(cand);
            let (ens, summary) = train_stage(view, &prefix, config, seed)?;
            let better = summary.wrong == 0
                && best.as_ref().is_none_or(|(_, _, b)| summary.terminated > b.terminated);
            if better {
                best = Some((pos, ens, summary));
            }
        }
        match best {
            Some((pos, ens, summary)) => {
                order.push(remaining.remove(pos));
                ensembles.push(ens);
                summaries.push(summary);
            }
            None => {
                warnings.push(format!(
                    "no identifier terminates training probes without error at stage {}; \
                     ordering the rest by unimodal rank-1 accuracy",
                    order.len() + 1
                ));
                let mut rest = std::mem::take(&mut remaining);
                let acc: Vec<f64> = (0..n).map(|i| view.unimodal_accuracy(i)).collect();
                rest.sort_by(|a, b| acc[*b].total_cmp(&acc[*a]).then(a.cmp(b)));
                for &i in &rest[..rest.len() - 1] {
                    order.push(i);
                    let (ens, summary) = train_stage(view, &order, config, seed)?;
                    ensembles.push(ens);
                    summaries.push(summary);
                }
                order.push(rest[rest.len() - 1]);
                remaining.clear();
            }
        }
    }
    order.extend(remaining);
    Ok(OrderedStages {
        order,
        ensembles,
        summaries,
        warnings,
    })
}

/// Chooses the stage order (or applies the override) for the given
/// training probes and returns it as identifiers.
pub fn order_stages<T: Real>(
    set: &ScoreSet<T>,
    train_probes: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<Vec<IdentifierId>> {
    Ok(train_pipeline(set, train_probes, config, seed)?.model.stage_order)
}

/// Estimates per-identifier statistics on the training probes, orders the
/// stages and trains one ensemble per stage except the last.
pub fn train_pipeline<T: Real>(
    set: &ScoreSet<T>,
    train_probes: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<TrainedPipeline<T>> {
    if set.matrices.is_empty() {
        return Err(Error::Empty("identifiers"));
    }
    if train_probes.is_empty() {
        return Err(Error::Empty("training probes"));
    }
    if set.n_gallery() < config.ensemble.k {
        return Err(Error::Config(format!(
            "gallery of {} is smaller than k = {}",
            set.n_gallery(),
            config.ensemble.k
        )));
    }
    let mut warnings = Vec::new();
    let stats = set
        .matrices
        .iter()
        .map(|m| {
            let pool: Vec<T> = train_probes
                .iter()
                .flat_map(|&p| m.row(p).iter().filter_map(|c| *c))
                .collect();
            estimate_stats(&pool).map_err(|e| match e {
                Error::Degenerate(msg) => Error::Degenerate(format!("{}: {msg}", m.identifier)),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let view = TrainingView {
        matrices: set.matrices.iter().collect(),
        stats,
        probes: train_probes.to_vec(),
        mates: train_probes.iter().map(|&p| set.mates[p]).collect(),
    };

    let ordered = match &config.stage_order {
        Some(names) => {
            let mut order = Vec::with_capacity(names.len());
            for name in names {
                let i = set
                    .matrices
                    .iter()
                    .position(|m| &m.identifier.name == name)
                    .ok_or_else(|| Error::Config(format!("stage order names unknown identifier '{name}'")))?;
                if order.contains(&i) {
                    return Err(Error::Config(format!("stage order repeats '{name}'")));
                }
                order.push(i);
            }
            if order.len() != set.matrices.len() {
                return Err(Error::Config(
                    "stage order must list every identifier exactly once".into(),
                ));
            }
            let mut ensembles = Vec::new();
            let mut summaries = Vec::new();
            for j in 1..order.len() {
                let (ens, summary) = train_stage(&view, &order[..j], &config.ensemble, seed)?;
                ensembles.push(ens);
                summaries.push(summary);
            }
            OrderedStages {
                order,
                ensembles,
                summaries,
                warnings: Vec::new(),
            }
        }
        None => order_greedy(&view, &config.ensemble, seed)?,
    };
    warnings.extend(ordered.warnings);
    if set.matrices.len() == 1 {
        warnings.push("single identifier: no stage ensembles, ranking is unimodal".into());
    }
    let model = FusionModel {
        stage_order: ordered
            .order
            .iter()
            .map(|&i| set.matrices[i].identifier.clone())
            .collect(),
        stats: ordered.order.iter().map(|&i| view.stats[i].clone()).collect(),
        ensembles: ordered.ensembles,
        k: config.ensemble.k,
        m: config.ensemble.m,
        eta: T::lit(config.ensemble.eta),
    };
    Ok(TrainedPipeline {
        model,
        summaries: ordered.summaries,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::LogisticModel;

    fn unit_stats(n: usize) -> Vec<NormStats<f64>> {
        vec![NormStats::from_mean_std(0.0, 1.0); n]
    }

    #[test]
    fn fuse_prefix_examples() {
        let a = [Some(1.0), Some(0.0)];
        let b = [Some(0.0), Some(1.0)];
        let rows: Vec<Option<&[Option<f64>]>> = vec![Some(&a), Some(&b)];
        assert_eq!(fuse_prefix(&rows, &unit_stats(2), 1).unwrap(), vec![1.0, 0.0]);
        assert_eq!(fuse_prefix(&rows, &unit_stats(2), 2).unwrap(), vec![0.5, 0.5]);
        let same: Vec<Option<&[Option<f64>]>> = vec![Some(&a), Some(&a)];
        assert_eq!(fuse_prefix(&same, &unit_stats(2), 2).unwrap(), vec![1.0, 0.0]);
        assert_eq!(full_fusion(&rows, &unit_stats(2)).unwrap(), vec![0.5, 0.5]);
        let none: Vec<Option<&[Option<f64>]>> = vec![None, None];
        assert!(fuse_prefix(&none, &unit_stats(2), 1).is_err());
    }

    #[test]
    fn missing_identifier_is_skipped() {
        let a = [Some(2.0), Some(4.0)];
        let c = [Some(4.0), Some(0.0)];
        let rows: Vec<Option<&[Option<f64>]>> = vec![Some(&a), None, Some(&c)];
        assert_eq!(fuse_prefix(&rows, &unit_stats(3), 2).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn zscore_applied_per_identifier() {
        let a = [Some(12.0), Some(8.0)];
        let rows: Vec<Option<&[Option<f64>]>> = vec![Some(&a)];
        let st = vec![NormStats::from_mean_std(10.0, 2.0)];
        assert_eq!(fuse_prefix(&rows, &st, 1).unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn outlier_examples() {
        let z = outlier_statistic::<f64>(&[10.0, 1.0, 1.0, 1.0], Some(4)).unwrap();
        assert!((z - 9.0 / 13.0).abs() < 1e-12);
        let crit = outlier_threshold(0.05, 4).unwrap();
        assert!((crit - (1.0 - 0.05f64.powf(1.0 / 3.0))).abs() < 1e-15);
        assert_eq!(outlier_stop(&[10.0, 1.0, 1.0, 1.0], 0.05, Some(4)).unwrap(), StageVerdict::Terminate);
        assert_eq!(outlier_threshold(0.05, 2).unwrap(), 0.95);
        assert_eq!(outlier_stop(&[5.0, 5.0, 1.0], 0.05, None).unwrap(), StageVerdict::Continue);
        assert_eq!(outlier_stop(&[0.0, 0.0, 0.0], 0.05, None).unwrap(), StageVerdict::Continue);
        assert!(outlier_stop(&[1.0], 0.05, None).is_err());
    }

    #[test]
    fn quality_gate_examples() {
        let l = |v| QualityLevel::new(v).unwrap();
        for q in QualityLevel::all() {
            assert_eq!(quality_gate(q, l(1)), StageVerdict::Continue);
        }
        assert_eq!(quality_gate(l(5), l(5)), StageVerdict::Continue);
        assert_eq!(quality_gate(l(1), l(2)), StageVerdict::Terminate);
    }

    #[test]
    fn rank1_prefers_lowest_index_on_ties() {
        assert_eq!(rank1(&[0.3, 0.9, 0.9]), 1);
        assert_eq!(top_k(&[0.1, 0.5, 0.3, f64::NEG_INFINITY], 3).unwrap(), vec![0.5, 0.3, 0.1]);
        assert!(top_k(&[0.1], 2).is_err());
    }

    fn constant_ensemble(logit: f64, k: usize) -> VetoEnsemble<f64> {
        let mut w = vec![0.0; k + 1];
        w[0] = logit;
        VetoEnsemble {
            members: vec![LogisticModel::new(w).unwrap(); 2],
            eta: 1e-6,
            input_stats: unit_stats(k),
        }
    }

    fn toy_model(logit: f64) -> FusionModel<f64> {
        FusionModel {
            stage_order: vec![IdentifierId::biometric("a"), IdentifierId::biometric("b")],
            stats: unit_stats(2),
            ensembles: vec![constant_ensemble(logit, 2)],
            k: 2,
            m: 2,
            eta: 1e-6,
        }
    }

    #[test]
    fn dedup_terminates_on_unanimous_ensemble() {
        let a = [Some(3.0), Some(0.0), Some(0.5)];
        let b = [Some(0.0), Some(4.0), Some(0.0)];
        let rows: Vec<Option<&[Option<f64>]>> = vec![Some(&a), Some(&b)];
        let d = dedup_probe(&toy_model(-40.0), 0, &rows, None, &StopRule::Adaptive { eta: None }).unwrap();
        assert_eq!((d.stages_used, d.early_terminated, d.rank1), (1, true, 0));

        let d = dedup_probe(&toy_model(0.0), 0, &rows, None, &StopRule::Adaptive { eta: None }).unwrap();
        assert_eq!((d.stages_used, d.early_terminated), (2, false));
        assert_eq!(d.fused_scores, full_fusion(&rows, &unit_stats(2)).unwrap());
        assert_eq!(d.rank1, 1);
    }

    #[test]
    fn quality_rule_fuses_everything_after_gate() {
        let a = [Some(3.0), Some(0.0), Some(0.5)];
        let b = [Some(0.0), Some(4.0), Some(0.0)];
        let rows: Vec<Option<&[Option<f64>]>> = vec![Some(&a), Some(&b)];
        let rule = StopRule::Quality {
            threshold: QualityLevel::new(3).unwrap(),
        };
        let good = dedup_probe(&toy_model(0.0), 0, &rows, Some(QualityLevel::new(1).unwrap()), &rule).unwrap();
        assert_eq!(good.stages_used, 1);
        let poor = dedup_probe(&toy_model(0.0), 0, &rows, Some(QualityLevel::new(4).unwrap()), &rule).unwrap();
        assert_eq!(poor.stages_used, 2);
    }

    #[test]
    fn small_gallery_is_a_config_error() {
        let a = [Some(3.0)];
        let rows: Vec<Option<&[Option<f64>]>> = vec![Some(&a), Some(&a)];
        assert!(matches!(
            dedup_probe(&toy_model(0.0), 0, &rows, None, &StopRule::Adaptive { eta: None }),
            Err(Error::Config(_))
        ));
    }
}
