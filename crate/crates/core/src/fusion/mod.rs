//! Score-level fusion rules and density-based fusion.

mod gmm;

pub use gmm::{fit_gmm, likelihood_ratio, Component, DensityModel, GmmConfig, GmmFit, LikelihoodRatio};

use crate::error::{Error, Result};
use crate::scalar::{cmp, median_sorted, sorted, Real};

/// Nonnegative matcher weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Real> WeightVector<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if weights.iter().any(|&w| !(w >= T::zero())) {
            return Err(Error::Domain("weights must be nonnegative".into()));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(8.0)) {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        Ok(WeightVector(weights))
    }

    pub fn equal(n: usize) -> Self {
        WeightVector(vec![T::one() / T::from_count(n); n])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A fused score together with the identifiers that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedScore<T> {
    pub value: T,
    pub contributing: Vec<String>,
}

fn check_len<T>(scores: &[T], w: &WeightVector<T>) -> Result<()> {
    if scores.len() != w.0.len() {
        return Err(Error::LengthMismatch {
            expected: w.0.len(),
            got: scores.len(),
        });
    }
    Ok(())
}

/// Weighted arithmetic mean.
pub fn sum_rule<T: Real>(scores: &[T], w: &WeightVector<T>) -> Result<T> {
    check_len(scores, w)?;
    Ok(scores.iter().zip(&w.0).map(|(&s, &wi)| s * wi).sum())
}

/// Which reading of the product rule to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProductForm {
    /// `prod s_i^{w_i}`, the weighted geometric mean.
    #[default]
    Geometric,
    /// `(prod w_i s_i)^{1 / sum w_i}` as typeset in the original formula.
    AsPrinted,
}

pub fn product_rule<T: Real>(scores: &[T], w: &WeightVector<T>) -> Result<T> {
    product_rule_with(scores, w, ProductForm::Geometric)
}

pub fn product_rule_with<T: Real>(scores: &[T], w: &WeightVector<T>, form: ProductForm) -> Result<T> {
    check_len(scores, w)?;
    if let Some(s) = scores.iter().find(|&&s| !(s >= T::zero())) {
        return Err(Error::Domain(format!("product rule needs nonnegative scores, got {s}")));
    }
    Ok(match form {
        ProductForm::Geometric => scores
            .iter()
            .zip(&w.0)
            .fold(T::one(), |acc, (&s, &wi)| {
                if wi == T::zero() {
                    acc
                } else {
                    acc * s.powf(wi)
                }
            }),
        ProductForm::AsPrinted => scores
            .iter()
            .zip(&w.0)
            .fold(T::one(), |acc, (&s, &wi)| acc * wi * s),
    })
}

pub fn median_rule<T: Real>(scores: &[T]) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::Empty("median rule"));
    }
    Ok(median_sorted(&sorted(scores)))
}

pub fn max_rule<T: Real>(scores: &[T]) -> Result<T> {
    scores.iter().copied().max_by(cmp).ok_or(Error::Empty("max rule"))
}

pub fn min_rule<T: Real>(scores: &[T]) -> Result<T> {
    scores.iter().copied().min_by(cmp).ok_or(Error::Empty("min rule"))
}

/// Max of the scores when the classifier predicts genuine, min otherwise.
pub fn dynamic_select<T: Real>(scores: &[T], predicted_genuine: bool) -> Result<T> {
    if predicted_genuine {
        max_rule(scores)
    } else {
        min_rule(scores)
    }
}
