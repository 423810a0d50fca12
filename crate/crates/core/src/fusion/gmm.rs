//! Gaussian mixture densities fitted by EM with BIC model selection, and the
//! likelihood-ratio fusion score built on them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_indexed, seeded};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Component<T> {
    pub weight: T,
    pub mean: Vec<T>,
    /// Row-major `dim x dim` covariance.
    pub cov: Vec<T>,
    chol: Vec<T>,
    log_det: T,
}

impl<T: Real> Component<T> {
    pub fn new(weight: T, mean: Vec<T>, cov: Vec<T>) -> Result<Self> {
        let dim = mean.len();
        if cov.len() != dim * dim {
            return Err(Error::LengthMismatch {
                expected: dim * dim,
                got: cov.len(),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (cov[i * dim + j], cov[j * dim + i]);
                if (a - b).abs() > T::lit(1e-9) * (T::one() + a.abs().max(b.abs())) {
                    return Err(Error::Domain("covariance is not symmetric".into()));
                }
            }
        }
        let chol = cholesky(&cov, dim)
            .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
        let log_det = (0..dim)
            .map(|i| chol[i * dim + i].ln())
            .sum::<T>()
            * T::lit(2.0);
        Ok(Component {
            weight,
            mean,
            cov,
            chol,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log of the multivariate normal density at `x`.
    pub fn log_pdf(&self, x: &[T]) -> T {
        let dim = self.dim();
        // solve L y = x - mu
        let mut y = vec![T::zero(); dim];
        for i in 0..dim {
            let mut acc = x[i] - self.mean[i];
            for (j, &yj) in y.iter().enumerate().take(i) {
                acc = acc - self.chol[i * dim + j] * yj;
            }
            y[i] = acc / self.chol[i * dim + i];
        }
        let maha: T = y.iter().map(|&v| v * v).sum();
        let ln2pi = T::lit((2.0 * std::f64::consts::PI).ln());
        -T::lit(0.5) * (T::from_count(dim) * ln2pi + self.log_det + maha)
    }
}

fn cholesky<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > T::zero()) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

/// Finite Gaussian mixture density.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityModel<T> {
    dim: usize,
    components: Vec<Component<T>>,
}

impl<T: Real> DensityModel<T> {
    pub fn new(components: Vec<Component<T>>) -> Result<Self> {
        let dim = components.first().ok_or(Error::Empty("mixture components"))?.dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: c.dim(),
            });
        }
        if components.iter().any(|c| !(c.weight >= T::zero())) {
            return Err(Error::Domain("negative component weight".into()));
        }
        let total: T = components.iter().map(|c| c.weight).sum();
        if (total - T::one()).abs() > T::lit(1e-6) {
            return Err(Error::Domain(format!("component weights sum to {total}")));
        }
        Ok(DensityModel { dim, components })
    }

    /// One-dimensional normal density.
    pub fn normal(mean: T, std_dev: T) -> Result<Self> {
        DensityModel::new(vec![Component::new(T::one(), vec![mean], vec![std_dev * std_dev])?])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component<T>] {
        &self.components
    }

    pub fn log_density(&self, x: &[T]) -> T {
        let terms: Vec<T> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_pdf(x))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn log_likelihood(&self, samples: &[Vec<T>]) -> T {
        samples.iter().map(|x| self.log_density(x)).sum()
    }

    /// Number of free parameters (weights, means, full covariances).
    pub fn parameter_count(&self) -> usize {
        let c = self.components.len();
        let d = self.dim;
        (c - 1) + c * d + c * d * (d + 1) / 2
    }

    pub fn bic(&self, samples: &[Vec<T>]) -> T {
        T::from_count(self.parameter_count()) * T::from_count(samples.len()).ln()
            - T::lit(2.0) * self.log_likelihood(samples)
    }
}

#[derive(Clone, Debug)]
pub struct GmmConfig {
    pub restarts: usize,
    pub ridge: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            restarts: 5,
            ridge: 1e-6,
            max_iterations: 200,
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmmFit<T> {
    pub model: DensityModel<T>,
    pub bic: T,
    /// Total log-likelihood after each EM iteration of the selected run.
    pub log_likelihood_trace: Vec<T>,
    /// False when the selected run hit the iteration cap.
    pub converged: bool,
}

/// Fits mixtures with 1..=`max_components` components and keeps the one with
/// the smallest BIC.
pub fn fit_gmm<T: Real>(
    samples: &[Vec<T>],
    max_components: usize,
    seed: u64,
    config: &GmmConfig,
) -> Result<GmmFit<T>> {
    if max_components == 0 {
        return Err(Error::Config("max_components must be at least 1".into()));
    }
    if samples.len() < 2 * max_components {
        return Err(Error::InsufficientData(format!(
            "{} samples for up to {} components",
            samples.len(),
            max_components
        )));
    }
    let dim = samples[0].len();
    if dim == 0 {
        return Err(Error::Empty("sample dimension"));
    }
    if let Some(s) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: s.len(),
        });
    }

    let mut best: Option<GmmFit<T>> = None;
    for c in 1..=max_components {
        for restart in 0..config.restarts.max(1) {
            let run_seed = derive_indexed(derive_indexed(seed, c as u64), restart as u64);
            let Some(fit) = run_em(samples, c, run_seed, config)? else {
                continue;
            };
            if best.as_ref().is_none_or(|b| fit.bic < b.bic) {
                best = Some(fit);
            }
            if c == 1 {
                // deterministic from the data alone
                break;
            }
        }
    }
    best.ok_or_else(|| Error::Degenerate("EM failed for every component count".into()))
}

fn data_covariance<T: Real>(samples: &[Vec<T>], dim: usize, ridge: T) -> Vec<T> {
    let n = T::from_count(samples.len());
    let mut mean = vec![T::zero(); dim];
    for s in samples {
        for (m, &v) in mean.iter_mut().zip(s) {
            *m = *m + v / n;
        }
    }
    let mut cov = vec![T::zero(); dim * dim];
    for s in samples {
        for i in 0..dim {
            for j in 0..dim {
                cov[i * dim + j] = cov[i * dim + j] + (s[i] - mean[i]) * (s[j] - mean[j]) / n;
            }
        }
    }
    for i in 0..dim {
        cov[i * dim + i] = cov[i * dim + i] + ridge;
    }
    cov
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// k-means++ style seeding of component means.
fn seed_means<T: Real>(samples: &[Vec<T>], c: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = seeded(seed);
    let mut means = vec![samples[rng.random_range(0..samples.len())].clone()];
    while means.len() < c {
        let d: Vec<f64> = samples
            .iter()
            .map(|s| {
                means
                    .iter()
                    .map(|m| sq_dist(s, m))
                    .fold(T::infinity(), T::min)
                    .as_f64()
            })
            .collect();
        let total: f64 = d.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = samples.len() - 1;
            for (i, &di) in d.iter().enumerate() {
                if u < di {
                    pick = i;
                    break;
                }
                u -= di;
            }
            pick
        } else {
            rng.random_range(0..samples.len())
        };
        means.push(samples[idx].clone());
    }
    means
}

fn run_em<T: Real>(
    samples: &[Vec<T>],
    c: usize,
    seed: u64,
    config: &GmmConfig,
) -> Result<Option<GmmFit<T>>> {
    let dim = samples[0].len();
    let n = samples.len();
    let ridge = T::lit(config.ridge);
    let base_cov = data_covariance(samples, dim, ridge);
    let mut comps: Vec<Component<T>> = Vec::with_capacity(c);
    for m in seed_means(samples, c, seed) {
        comps.push(Component::new(T::one() / T::from_count(c), m, base_cov.clone())?);
    }
    let mut model = DensityModel { dim, components: comps };
    let mut trace = Vec::new();
    let mut prev = model.log_likelihood(samples);
    let mut converged = false;
    let mut resp = vec![T::zero(); n * c];

    for _ in 0..config.max_iterations {
        // E step
        let mut terms = vec![T::zero(); c];
        for (i, x) in samples.iter().enumerate() {
            for (k, comp) in model.components.iter().enumerate() {
                terms[k] = comp.weight.ln() + comp.log_pdf(x);
            }
            let lse = log_sum_exp(&terms);
            for k in 0..c {
                resp[i * c + k] = (terms[k] - lse).exp();
            }
        }
        // M step
        let mut next = Vec::with_capacity(c);
        for (k, old) in model.components.iter().enumerate() {
            let nk: T = (0..n).map(|i| resp[i * c + k]).sum();
            if !(nk > T::lit(1e-10)) {
                next.push(old.clone());
                continue;
            }
            let mut mean = vec![T::zero(); dim];
            for (i, x) in samples.iter().enumerate() {
                let r = resp[i * c + k];
                for (m, &v) in mean.iter_mut().zip(x) {
                    *m = *m + r * v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / nk);
            let mut cov = vec![T::zero(); dim * dim];
            for (i, x) in samples.iter().enumerate() {
                let r = resp[i * c + k];
                for a in 0..dim {
                    let da = x[a] - mean[a];
                    for b in 0..=a {
                        cov[a * dim + b] = cov[a * dim + b] + r * da * (x[b] - mean[b]);
                    }
                }
            }
            for a in 0..dim {
                for b in 0..=a {
                    let v = cov[a * dim + b] / nk;
                    cov[a * dim + b] = v;
                    cov[b * dim + a] = v;
                }
                cov[a * dim + a] = cov[a * dim + a] + ridge;
            }
            match Component::new(nk / T::from_count(n), mean, cov) {
                Ok(comp) => next.push(comp),
                Err(_) => return Ok(None),
            }
        }
        let total: T = next.iter().map(|c| c.weight).sum();
        next.iter_mut().for_each(|c| c.weight = c.weight / total);
        model = DensityModel { dim, components: next };
        let ll = model.log_likelihood(samples);
        trace.push(ll);
        if !ll.is_finite() {
            return Ok(None);
        }
        if ((ll - prev) / T::from_count(n)).abs() < T::lit(config.tolerance) {
            converged = true;
            break;
        }
        prev = ll;
    }
    let bic = model.bic(samples);
    Ok(Some(GmmFit {
        model,
        bic,
        log_likelihood_trace: trace,
        converged,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LikelihoodRatio<T> {
    pub value: T,
    /// Set when the impostor density underflowed and `value` was capped.
    pub capped: bool,
}

/// Ratio of the genuine to the impostor density at `x`.
pub fn likelihood_ratio<T: Real>(
    genuine: &DensityModel<T>,
    impostor: &DensityModel<T>,
    x: &[T],
) -> Result<LikelihoodRatio<T>> {
    if genuine.dim() != impostor.dim() {
        return Err(Error::LengthMismatch {
            expected: genuine.dim(),
            got: impostor.dim(),
        });
    }
    if x.len() != genuine.dim() {
        return Err(Error::LengthMismatch {
            expected: genuine.dim(),
            got: x.len(),
        });
    }
    let cap = T::max_value().sqrt();
    let lg = genuine.log_density(x);
    let li = impostor.log_density(x);
    if li == T::neg_infinity() || lg - li >= cap.ln() {
        return Ok(LikelihoodRatio {
            value: cap,
            capped: true,
        });
    }
    Ok(LikelihoodRatio {
        value: (lg - li).exp(),
        capped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_ratio_examples() {
        let g = DensityModel::normal(1.0, 1.0).unwrap();
        let i = DensityModel::normal(0.0, 1.0).unwrap();
        assert_eq!(likelihood_ratio(&g, &g, &[0.3]).unwrap().value, 1.0);
        assert_abs_diff_eq!(likelihood_ratio(&g, &i, &[0.5]).unwrap().value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            likelihood_ratio(&g, &i, &[1.0]).unwrap().value,
            0.5f64.exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn ratio_caps_on_underflow() {
        let g = DensityModel::normal(0.0, 1.0).unwrap();
        let i = DensityModel::normal(0.0, 1e-3).unwrap();
        let r = likelihood_ratio(&g, &i, &[50.0]).unwrap();
        assert!(r.capped);
        assert!(r.value > 1e100);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = DensityModel::normal(0.0, 1.0).unwrap();
        let two = DensityModel::new(vec![
            Component::new(1.0, vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
        ])
        .unwrap();
        assert!(likelihood_ratio(&g, &two, &[0.0]).is_err());
    }

    #[test]
    fn non_spd_covariance_is_rejected() {
        assert!(Component::new(1.0, vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(Component::new(1.0, vec![0.0, 0.0], vec![1.0, 0.5, 0.0, 1.0]).is_err());
    }

    #[test]
    fn too_few_samples() {
        let s = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            fit_gmm(&s, 2, 1, &GmmConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
