//! Logistic-regression classifier and the bootstrap-aggregated ensemble in
//! which every member can veto early termination.
//!
//! A positive label means "the rank-1 candidate is not the genuine mate".
//! Members predict the probability of that event; the ensemble lets the
//! pipeline stop only when every member's probability is at or below the
//! decision threshold `eta`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::normalize::NormStats;
use crate::rng::{derive_indexed, seeded};
use crate::scalar::Real;

pub fn logistic<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Weights `theta[0..=k]`; `theta[0]` multiplies the constant bias input.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel<T> {
    pub weights: Vec<T>,
}

impl<T: Real> LogisticModel<T> {
    pub fn zeros(k: usize) -> Self {
        LogisticModel {
            weights: vec![T::zero(); k + 1],
        }
    }

    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("logistic weights"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain("logistic weights must be finite".into()));
        }
        Ok(LogisticModel { weights })
    }

    /// Number of features (excluding the bias).
    pub fn k(&self) -> usize {
        self.weights.len() - 1
    }

    fn linear(&self, features: &[T]) -> T {
        features
            .iter()
            .zip(&self.weights[1..])
            .fold(self.weights[0], |acc, (&x, &w)| acc + x * w)
    }

    pub fn predict(&self, features: &[T]) -> Result<T> {
        if features.len() != self.k() {
            return Err(Error::LengthMismatch {
                expected: self.k(),
                got: features.len(),
            });
        }
        Ok(logistic(self.linear(features)))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingSet<T> {
    pub features: Vec<Vec<T>>,
    /// `true` when the rank-1 candidate is not the mate.
    pub labels: Vec<bool>,
}

impl<T: Real> TrainingSet<T> {
    pub fn new(features: Vec<Vec<T>>, labels: Vec<bool>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if let Some(k) = features.first().map(Vec::len) {
            if let Some(row) = features.iter().find(|r| r.len() != k) {
                return Err(Error::LengthMismatch {
                    expected: k,
                    got: row.len(),
                });
            }
        }
        Ok(TrainingSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn resample(&self, indices: &[usize]) -> TrainingSet<T> {
        TrainingSet {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Mean cross-entropy of `model` on `data`, plus the optional L2 penalty on
/// the non-bias weights.
pub fn cost<T: Real>(model: &LogisticModel<T>, data: &TrainingSet<T>) -> Result<T> {
    cost_l2(model, data, T::zero())
}

fn check_data<T: Real>(model: &LogisticModel<T>, data: &TrainingSet<T>) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if data.k() != model.k() {
        return Err(Error::LengthMismatch {
            expected: model.k(),
            got: data.k(),
        });
    }
    Ok(())
}

fn cost_l2<T: Real>(model: &LogisticModel<T>, data: &TrainingSet<T>, l2: T) -> Result<T> {
    check_data(model, data)?;
    let total: T = data
        .features
        .iter()
        .zip(&data.labels)
        .map(|(x, &y)| {
            let z = model.linear(x);
            // -log h = softplus(-z); -log(1 - h) = softplus(z)
            if y {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    let penalty = model.weights[1..].iter().map(|&w| w * w).sum::<T>() * l2 / T::lit(2.0);
    Ok(total / T::from_count(data.len()) + penalty)
}

/// Analytic gradient of the cost with respect to every weight.
pub fn gradient<T: Real>(model: &LogisticModel<T>, data: &TrainingSet<T>) -> Result<Vec<T>> {
    gradient_l2(model, data, T::zero())
}

fn gradient_l2<T: Real>(model: &LogisticModel<T>, data: &TrainingSet<T>, l2: T) -> Result<Vec<T>> {
    check_data(model, data)?;
    let mut g = vec![T::zero(); model.weights.len()];
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let h = logistic(model.linear(x));
        let r = h - if y { T::one() } else { T::zero() };
        g[0] = g[0] + r;
        for (gi, &xi) in g[1..].iter_mut().zip(x) {
            *gi = *gi + r * xi;
        }
    }
    let m = T::from_count(data.len());
    g.iter_mut().for_each(|v| *v = *v / m);
    for (gi, &w) in g[1..].iter_mut().zip(&model.weights[1..]) {
        *gi = *gi + l2 * w;
    }
    Ok(g)
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub step: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Halvings of the initial step allowed before training gives up; a
    /// rejected step halves the current step.
    pub max_rejections: usize,
    /// Factor applied to the step after every accepted step; 1 keeps it
    /// fixed.
    pub growth: f64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step: 0.1,
            tolerance: 1e-8,
            max_iterations: 10_000,
            max_rejections: 10,
            growth: 1.1,
            l2: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport<T> {
    pub model: LogisticModel<T>,
    pub initial_cost: T,
    pub final_cost: T,
    pub iterations: usize,
    pub converged: bool,
    /// Only one label value occurred in the data.
    pub single_class: bool,
}

/// Full-batch gradient descent from zero weights. A step that raises the
/// cost is rejected and the step size halved, so accepted costs decrease
/// monotonically.
pub fn train<T: Real>(data: &TrainingSet<T>, config: &TrainConfig) -> Result<TrainReport<T>> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "logistic regression needs at least 2 rows, got {}",
            data.len()
        )));
    }
    if !(config.step > 0.0 && config.growth >= 1.0 && config.l2 >= 0.0) {
        return Err(Error::Config(format!(
            "step must be positive, growth at least 1 and l2 nonnegative; got {}, {}, {}",
            config.step, config.growth, config.l2
        )));
    }
    let positives = data.labels.iter().filter(|&&y| y).count();
    let single_class = positives == 0 || positives == data.len();
    let l2 = T::lit(config.l2);
    let tol = T::lit(config.tolerance);

    let mut model = LogisticModel::zeros(data.k());
    let initial_cost = cost_l2(&model, data, l2)?;
    let mut current = initial_cost;
    let mut step = T::lit(config.step);
    let growth = T::lit(config.growth);
    // divergence: the step had to shrink below its initial value by the whole halving budget
    let min_step = step / T::lit(2f64.powi(config.max_rejections.min(60) as i32));
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let g = gradient_l2(&model, data, l2)?;
        let candidate = LogisticModel {
            weights: model
                .weights
                .iter()
                .zip(&g)
                .map(|(&w, &gi)| w - step * gi)
                .collect(),
        };
        let next = cost_l2(&candidate, data, l2)?;
        if next <= current {
            let delta = current - next;
            model = candidate;
            current = next;
            step = step * growth;
            if delta < tol {
                converged = true;
                break;
            }
        } else {
            if next - current < tol {
                converged = true;
                break;
            }
            step = step / T::lit(2.0);
            if step < min_step {
                return Err(Error::Divergence { iterations });
            }
        }
    }
    Ok(TrainReport {
        model,
        initial_cost,
        final_cost: current,
        iterations,
        converged,
        single_class,
    })
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn bootstrap_sample(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageVerdict {
    Terminate,
    Continue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VetoEnsemble<T> {
    pub members: Vec<LogisticModel<T>>,
    pub eta: T,
    /// Per-feature z-score statistics applied before prediction.
    pub input_stats: Vec<NormStats<T>>,
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub m: usize,
    pub k: usize,
    pub eta: f64,
    pub train: TrainConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            m: 100,
            k: 5,
            eta: 1e-6,
            train: TrainConfig::default(),
        }
    }
}

fn feature_stats<T: Real>(data: &TrainingSet<T>) -> Vec<NormStats<T>> {
    let n = T::from_count(data.len());
    (0..data.k())
        .map(|j| {
            let col = data.features.iter().map(|r| r[j]);
            let mean = col.clone().sum::<T>() / n;
            let var = if data.len() > 1 {
                col.map(|v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one())
            } else {
                T::zero()
            };
            // constant columns pass through centred but unscaled
            let sd = if var > T::zero() { var.sqrt() } else { T::one() };
            NormStats::from_mean_std(mean, sd)
        })
        .collect()
}

/// Trains `m` members, each on its own bootstrap replicate. Member `i` uses
/// the seed derived from `(seed, i)`, so results do not depend on thread
/// scheduling.
pub fn train_ensemble<T: Real>(
    data: &TrainingSet<T>,
    config: &EnsembleConfig,
    seed: u64,
) -> Result<VetoEnsemble<T>> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if config.m == 0 {
        return Err(Error::Config("ensemble size m must be at least 1".into()));
    }
    if data.k() != config.k {
        return Err(Error::LengthMismatch {
            expected: config.k,
            got: data.k(),
        });
    }
    let eta = T::lit(config.eta);
    if !(eta >= T::zero() && eta <= T::one()) {
        return Err(Error::Config(format!("eta must lie in [0, 1], got {}", config.eta)));
    }
    let input_stats = feature_stats(data);
    let normalized = TrainingSet {
        features: data
            .features
            .iter()
            .map(|r| standardize(r, &input_stats))
            .collect(),
        labels: data.labels.clone(),
    };
    let members = (0..config.m)
        .into_par_iter()
        .map(|i| {
            let idx = bootstrap_sample(normalized.len(), derive_indexed(seed, i as u64));
            let sample = normalized.resample(&idx);
            if sample.len() < 2 {
                // a one-row training set: zero weights predict 0.5 everywhere
                return Ok(LogisticModel::zeros(config.k));
            }
            train(&sample, &config.train)
                .map(|r| r.model)
                .map_err(|e| Error::Member {
                    member: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VetoEnsemble {
        members,
        eta,
        input_stats,
    })
}

fn standardize<T: Real>(features: &[T], stats: &[NormStats<T>]) -> Vec<T> {
    features
        .iter()
        .zip(stats)
        .map(|(&x, s)| (x - s.mean) / s.std_dev)
        .collect()
}

impl<T: Real> VetoEnsemble<T> {
    pub fn k(&self) -> usize {
        self.input_stats.len()
    }

    pub fn m(&self) -> usize {
        self.members.len()
    }

    /// Member probabilities for raw (unstandardized) features.
    pub fn member_probabilities(&self, features: &[T]) -> Result<Vec<T>> {
        if features.len() != self.k() {
            return Err(Error::LengthMismatch {
                expected: self.k(),
                got: features.len(),
            });
        }
        let x = standardize(features, &self.input_stats);
        self.members.iter().map(|m| m.predict(&x)).collect()
    }

    /// Largest member probability; termination at threshold `eta` happens
    /// iff this is `<= eta`.
    pub fn max_probability(&self, features: &[T]) -> Result<T> {
        Ok(self
            .member_probabilities(features)?
            .into_iter()
            .fold(T::zero(), T::max))
    }

    pub fn decide(&self, features: &[T]) -> Result<StageVerdict> {
        self.decide_at(features, self.eta)
    }

    pub fn decide_at(&self, features: &[T], eta: T) -> Result<StageVerdict> {
        Ok(verdict_for(self.max_probability(features)?, eta))
    }
}

pub fn veto_decide<T: Real>(ensemble: &VetoEnsemble<T>, features: &[T]) -> Result<StageVerdict> {
    ensemble.decide(features)
}

/// Unanimity rule on a precomputed maximum member probability. `eta = 0`
/// never terminates, even when a probability underflows to zero.
pub fn verdict_for<T: Real>(max_probability: T, eta: T) -> StageVerdict {
    if eta > T::zero() && max_probability <= eta {
        StageVerdict::Terminate
    } else {
        StageVerdict::Continue
    }
}
