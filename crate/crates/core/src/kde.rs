//! Gaussian kernel density estimation and the two-step density-difference
//! baseline `p_hat - p_hat'`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds::{assign_folds, complement};
use crate::lsdd::median_sigma_grid;
use crate::rng::Rng;
use crate::sample::{check_dim, sq_dist, SampleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    samples: SampleSet,
    bandwidth: f64,
}

impl KdeModel {
    pub fn new(samples: SampleSet, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth", format!("must be positive, got {bandwidth}")));
        }
        Ok(Self { samples, bandwidth })
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    /// Log density, computed with log-sum-exp so far points stay finite.
    pub fn log_eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let s2 = self.bandwidth * self.bandwidth;
        let d = self.dim() as f64;
        let exps: Vec<f64> = self.samples.iter().map(|xi| -sq_dist(x, xi) / (2.0 * s2)).collect();
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
        Ok(lse - (self.samples.len() as f64).ln() - 0.5 * d * (2.0 * PI * s2).ln())
    }
}

/// `p_hat(x) = (1 / (n (2 pi sigma^2)^{d/2})) sum_i exp(-|x - x_i|^2 / (2 sigma^2))`.
pub fn kde_eval(model: &KdeModel, x: &[f64]) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    let s2 = model.bandwidth * model.bandwidth;
    let norm = model.samples.len() as f64 * (2.0 * PI * s2).powf(model.dim() as f64 / 2.0);
    let sum: f64 = model
        .samples
        .iter()
        .map(|xi| (-sq_dist(x, xi) / (2.0 * s2)).exp())
        .sum();
    Ok(sum / norm)
}

/// Per-candidate mean held-out log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub candidates: Vec<f64>,
    pub mean_log_likelihood: Vec<f64>,
    pub selected: f64,
}

/// Likelihood cross-validation over `candidates`.
pub fn kde_bandwidth_cv(
    x: &SampleSet,
    candidates: &[f64],
    folds: usize,
    rng: &mut Rng,
) -> Result<BandwidthReport> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidates", "must be nonempty"));
    }
    let assignment = assign_folds(x.len(), folds, rng)?;
    let splits = assignment
        .iter()
        .map(|fold| Ok((x.select(&complement(x.len(), fold))?, x.select(fold)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = Vec::with_capacity(candidates.len());
    for &bw in candidates {
        let mut total = 0.0;
        for (train, hold) in &splits {
            let model = KdeModel::new(train.clone(), bw)?;
            let ll: f64 = hold
                .iter()
                .map(|p| model.log_eval(p))
                .sum::<Result<f64>>()?;
            total += ll / hold.len() as f64;
        }
        scores.push(total / folds as f64);
    }
    let best = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .fold(None::<(usize, f64)>, |acc, (i, &s)| match acc {
            Some((_, b)) if s <= b => acc,
            _ => Some((i, s)),
        })
        .ok_or_else(|| Error::Numerical("every bandwidth candidate has -inf likelihood".into()))?;
    Ok(BandwidthReport {
        candidates: candidates.to_vec(),
        mean_log_likelihood: scores,
        selected: candidates[best.0],
    })
}

pub fn kde_select_bandwidth(
    x: &SampleSet,
    candidates: &[f64],
    folds: usize,
    rng: &mut Rng,
) -> Result<f64> {
    Ok(kde_bandwidth_cv(x, candidates, folds, rng)?.selected)
}

/// Default bandwidth candidates: 10 values log-spaced over `[0.1 m, 10 m]`,
/// `m` the median pairwise distance.
pub fn default_bandwidths(x: &SampleSet) -> Result<Vec<f64>> {
    median_sigma_grid(x, 10, 0.1, 10.0)
}

/// KDE with bandwidth chosen by likelihood cross-validation.
pub fn kde_fit_cv(x: &SampleSet, candidates: &[f64], folds: usize, rng: &mut Rng) -> Result<KdeModel> {
    let bw = kde_select_bandwidth(x, candidates, folds, rng)?;
    KdeModel::new(x.clone(), bw)
}

pub fn kde_diff_eval(p: &KdeModel, p_prime: &KdeModel, xs: &SampleSet) -> Result<Vec<f64>> {
    check_dim(p.dim(), p_prime.dim())?;
    xs.iter()
        .map(|x| Ok(kde_eval(p, x)? - kde_eval(p_prime, x)?))
        .collect()
}

/// `int p_hat q_hat dx` for two Gaussian KDEs, using
/// `int N(x; a, s^2 I) N(x; b, t^2 I) dx = N(a; b, (s^2 + t^2) I)`.
pub fn kde_inner(p: &KdeModel, q: &KdeModel) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    let v = p.bandwidth.powi(2) + q.bandwidth.powi(2);
    let norm = (2.0 * PI * v).powf(-(p.dim() as f64) / 2.0);
    let mut sum = 0.0;
    for a in p.samples.iter() {
        for b in q.samples.iter() {
            sum += (-sq_dist(a, b) / (2.0 * v)).exp();
        }
    }
    Ok(norm * sum / (p.samples.len() * q.samples.len()) as f64)
}

/// Exact `int (p_hat - p_hat')^2 dx`, clamped at zero.
pub fn kde_l2(p: &KdeModel, p_prime: &KdeModel) -> Result<f64> {
    let v = kde_inner(p, p)? - 2.0 * kde_inner(p, p_prime)? + kde_inner(p_prime, p_prime)?;
    Ok(v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    fn pts(v: &[f64]) -> SampleSet {
        SampleSet::from_scalars(v).unwrap()
    }

    #[test]
    fn peak_value() {
        let m = KdeModel::new(pts(&[0.3]), 1.0).unwrap();
        assert_relative_eq!(kde_eval(&m, &[0.3]).unwrap(), 0.398942, epsilon = 1e-6);
        assert_relative_eq!(m.log_eval(&[1.7]).unwrap(), kde_eval(&m, &[1.7]).unwrap().ln(), epsilon = 1e-12);
        assert!(kde_eval(&m, &[5.0]).unwrap() > 0.0);
        assert!(kde_eval(&m, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn diff_identities() {
        let a = KdeModel::new(pts(&[0.0, 0.5, 1.0]), 0.4).unwrap();
        let b = KdeModel::new(pts(&[0.2, 2.0]), 0.7).unwrap();
        let xs = pts(&[-1.0, 0.3, 1.5]);
        assert!(kde_diff_eval(&a, &a, &xs).unwrap().iter().all(|v| *v == 0.0));
        let ab = kde_diff_eval(&a, &b, &xs).unwrap();
        let ba = kde_diff_eval(&b, &a, &xs).unwrap();
        for (i, (u, v)) in ab.iter().zip(&ba).enumerate() {
            assert_eq!(*u, -*v);
            let x = xs.point(i);
            assert_eq!(*u, kde_eval(&a, x).unwrap() - kde_eval(&b, x).unwrap());
        }
    }

    #[test]
    fn l2_identical_and_symmetric() {
        let a = KdeModel::new(pts(&[0.0, 0.5, 1.0]), 0.4).unwrap();
        let b = KdeModel::new(pts(&[0.2, 2.0]), 0.7).unwrap();
        assert!(kde_l2(&a, &a).unwrap() < 1e-12);
        assert_relative_eq!(kde_l2(&a, &b).unwrap(), kde_l2(&b, &a).unwrap(), epsilon = 1e-14);
        assert!(kde_l2(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn bandwidth_selection() {
        let x = pts(&[0.0, 0.1, 0.2, 5.0, 5.1, 5.2, 10.0, 10.1, 10.2, 0.15]);
        assert_eq!(kde_select_bandwidth(&x, &[0.7], 5, &mut seeded(0)).unwrap(), 0.7);
        let m = crate::kernel::median_pairwise_distance(&x);
        let cands = [0.001 * m, 0.05 * m, 100.0 * m];
        let a = kde_select_bandwidth(&x, &cands, 5, &mut seeded(2)).unwrap();
        let b = kde_select_bandwidth(&x, &cands, 5, &mut seeded(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, cands[1]);
    }
}
