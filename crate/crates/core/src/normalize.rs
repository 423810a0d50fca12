//! Score normalization: min-max, decimal scaling, z-score, median/MAD,
//! double sigmoid and tanh (Hampel) estimators.

use crate::error::{Error, Result};
use crate::scalar::{median_sorted, quantile_sorted, sorted, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatsSource {
    Given,
    Estimated,
}

/// Location and scale statistics of a score distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats<T> {
    pub min: T,
    pub max: T,
    pub mean: T,
    pub std_dev: T,
    pub median: T,
    pub mad: T,
    pub hampel_mean: T,
    pub hampel_std: T,
    pub source: StatsSource,
}

impl<T: Real> NormStats<T> {
    /// Statistics with only the z-score fields meaningful; the remaining
    /// fields mirror them so every normalizer stays well defined.
    pub fn from_mean_std(mean: T, std_dev: T) -> Self {
        NormStats {
            min: mean - std_dev,
            max: mean + std_dev,
            mean,
            std_dev,
            median: mean,
            mad: std_dev,
            hampel_mean: mean,
            hampel_std: std_dev,
            source: StatsSource::Given,
        }
    }

    pub fn with_range(mut self, min: T, max: T) -> Self {
        self.min = min;
        self.max = max;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmoidParams<T> {
    pub t: T,
    pub r1: T,
    pub r2: T,
}

impl<T: Real> SigmoidParams<T> {
    pub fn new(t: T, r1: T, r2: T) -> Result<Self> {
        if !(r1 > T::zero() && r2 > T::zero()) {
            return Err(Error::Domain(format!(
                "sigmoid half-widths must be positive, got r1={r1} r2={r2}"
            )));
        }
        Ok(SigmoidParams { t, r1, r2 })
    }
}

/// Hampel influence-function breakpoints (in standardized units) and the
/// tanh spread parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HampelParams<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub alpha: T,
}

impl<T: Real> HampelParams<T> {
    pub const DEFAULT_ALPHA: f64 = 0.01;

    pub fn new(a: T, b: T, c: T, alpha: T) -> Result<Self> {
        if !(T::zero() <= a && a <= b && b <= c) {
            return Err(Error::Domain(format!(
                "Hampel breakpoints must satisfy 0 <= a <= b <= c, got ({a}, {b}, {c})"
            )));
        }
        if !(alpha > T::zero()) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        Ok(HampelParams { a, b, c, alpha })
    }

    /// Breakpoints at the 70th/85th/95th percentiles of the absolute
    /// standardized deviations from the median, with the default alpha.
    pub fn estimate(scores: &[T]) -> Result<Self> {
        let (median, scale) = robust_start(scores)?;
        let mut dev: Vec<T> = scores.iter().map(|&s| ((s - median) / scale).abs()).collect();
        dev = sorted(&dev);
        HampelParams::new(
            quantile_sorted(&dev, 0.70),
            quantile_sorted(&dev, 0.85),
            quantile_sorted(&dev, 0.95),
            T::lit(Self::DEFAULT_ALPHA),
        )
    }
}

/// Median and a positive robust scale (1.4826 MAD, or the sample standard
/// deviation when the MAD vanishes).
fn robust_start<T: Real>(scores: &[T]) -> Result<(T, T)> {
    let st = estimate_location_scale(scores)?;
    let mad_scale = T::lit(1.4826) * st.mad;
    Ok((
        st.median,
        if mad_scale > T::zero() { mad_scale } else { st.std_dev },
    ))
}

struct LocationScale<T> {
    min: T,
    max: T,
    mean: T,
    std_dev: T,
    median: T,
    mad: T,
}

fn estimate_location_scale<T: Real>(scores: &[T]) -> Result<LocationScale<T>> {
    if scores.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 scores, got {}",
            scores.len()
        )));
    }
    let n = T::from_count(scores.len());
    let mean = scores.iter().copied().sum::<T>() / n;
    let ss = scores.iter().map(|&s| (s - mean) * (s - mean)).sum::<T>();
    let std_dev = (ss / (n - T::one())).sqrt();
    if !(std_dev > T::zero()) {
        return Err(Error::Degenerate("all scores are equal".into()));
    }
    let s = sorted(scores);
    let median = median_sorted(&s);
    let dev = sorted(&s.iter().map(|&x| (x - median).abs()).collect::<Vec<_>>());
    Ok(LocationScale {
        min: s[0],
        max: s[s.len() - 1],
        mean,
        std_dev,
        median,
        mad: median_sorted(&dev),
    })
}

const HAMPEL_ITERATIONS: usize = 10;

/// Estimates every statistic from data, using Hampel breakpoints estimated
/// from the same data.
pub fn estimate_stats<T: Real>(scores: &[T]) -> Result<NormStats<T>> {
    let params = HampelParams::estimate(scores)?;
    estimate_stats_with(scores, &params)
}

pub fn estimate_stats_with<T: Real>(scores: &[T], hampel: &HampelParams<T>) -> Result<NormStats<T>> {
    let ls = estimate_location_scale(scores)?;
    let (mut mu, sigma) = robust_start(scores)?;
    // location-only reweighting: rescaling from the downweighted points
    // feeds back into more rejections and collapses the scale
    for _ in 0..HAMPEL_ITERATIONS {
        let mut wsum = T::zero();
        let mut wx = T::zero();
        for &s in scores {
            let u = (s - mu) / sigma;
            let w = if u == T::zero() { T::one() } else { hampel_psi(u, hampel) / u };
            wsum = wsum + w;
            wx = wx + w * s;
        }
        if !(wsum > T::zero()) {
            break;
        }
        mu = wx / wsum;
    }
    Ok(NormStats {
        min: ls.min,
        max: ls.max,
        mean: ls.mean,
        std_dev: ls.std_dev,
        median: ls.median,
        mad: ls.mad,
        hampel_mean: mu,
        hampel_std: sigma,
        source: StatsSource::Estimated,
    })
}

/// `(s - min) / (max - min)`; out-of-range inputs are not clamped.
pub fn minmax<T: Real>(s: T, stats: &NormStats<T>) -> Result<T> {
    let range = stats.max - stats.min;
    if !(range > T::zero()) {
        return Err(Error::Degenerate("max equals min".into()));
    }
    Ok((s - stats.min) / range)
}

/// `s / 10^n` with `n = ceil(log10(max))`.
pub fn decimal_scale<T: Real>(s: T, stats: &NormStats<T>) -> Result<T> {
    if !(stats.max > T::zero()) {
        return Err(Error::Domain(format!(
            "decimal scaling needs a positive maximum, got {}",
            stats.max
        )));
    }
    if s < T::zero() {
        return Err(Error::Domain(format!("decimal scaling needs s >= 0, got {s}")));
    }
    let n = stats.max.log10().ceil();
    Ok(s / T::lit(10.0).powf(n))
}

pub fn zscore<T: Real>(s: T, stats: &NormStats<T>) -> Result<T> {
    if !(stats.std_dev > T::zero()) {
        return Err(Error::Degenerate("standard deviation is zero".into()));
    }
    Ok((s - stats.mean) / stats.std_dev)
}

pub fn median_mad<T: Real>(s: T, stats: &NormStats<T>) -> Result<T> {
    if !(stats.mad > T::zero()) {
        return Err(Error::Degenerate("MAD is zero".into()));
    }
    Ok((s - stats.median) / stats.mad)
}

/// Piecewise logistic with half-width `r1` below the operating point and
/// `r2` above it.
pub fn double_sigmoid<T: Real>(s: T, p: &SigmoidParams<T>) -> T {
    let r = if s < p.t { p.r1 } else { p.r2 };
    let e = (-T::lit(2.0) * (s - p.t) / r).exp();
    T::one() / (T::one() + e)
}

pub fn tanh_norm<T: Real>(s: T, stats: &NormStats<T>, p: &HampelParams<T>) -> Result<T> {
    if !(stats.hampel_std > T::zero()) {
        return Err(Error::Degenerate("Hampel scale is zero".into()));
    }
    let u = p.alpha * (s - stats.hampel_mean) / stats.hampel_std;
    Ok(T::lit(0.5) * (u.tanh() + T::one()))
}

/// Hampel three-part redescending influence function.
pub fn hampel_psi<T: Real>(u: T, p: &HampelParams<T>) -> T {
    let au = u.abs();
    let sign = if u < T::zero() { -T::one() } else { T::one() };
    if au < p.a {
        u
    } else if au < p.b {
        p.a * sign
    } else if au < p.c {
        p.a * sign * (p.c - au) / (p.c - p.b)
    } else {
        T::zero()
    }
}

/// Z-score normalizes a whole vector.
pub fn zscore_all<T: Real>(scores: &[T], stats: &NormStats<T>) -> Result<Vec<T>> {
    scores.iter().map(|&s| zscore(s, stats)).collect()
}
