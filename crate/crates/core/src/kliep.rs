//! KL-divergence estimation through direct density-ratio fitting (KLIEP).
//!
//! The ratio `w(x) = p(x) / p'(x)` is modeled as `sum_l alpha_l k(x, c_l)`
//! with Gaussian kernels centered on numerator samples. The fit maximizes
//! `(1/n) sum_i log w(x_i)` subject to `alpha >= 0` and
//! `(1/n') sum_j w(x'_j) = 1`, by projected gradient ascent with a
//! backtracking (Armijo) line search. Projection clamps `alpha` at zero and
//! rescales to meet the normalization constraint.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds::{assign_folds, complement};
use crate::kernel::{column_means, select_from_pool, GaussianBasis};
use crate::lsdd::median_sigma_grid;
use crate::rng::Rng;
use crate::sample::SampleSet;

/// Ratio values are clamped below at this before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
const MAX_STEP: f64 = 1e8;

/// Solver settings. When a center carries (numerically) no denominator mass
/// its coefficient is unconstrained and the objective is unbounded, so the
/// iteration budget, not the tolerance, ends those fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KliepOptions {
    pub max_iter: usize,
    /// Tolerance on the KKT residual (projected gradient) norm.
    pub tol: f64,
    pub max_centers: usize,
}

impl Default for KliepOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            max_centers: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioModel {
    pub basis: GaussianBasis,
    pub alpha: DVector<f64>,
    /// Objective after every accepted iteration, starting point first.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iter` was reached before the tolerance.
    pub converged: bool,
}

impl RatioModel {
    pub fn ratio(&self, xs: &SampleSet) -> Result<DVector<f64>> {
        Ok(self.basis.design_matrix(xs)? * &self.alpha)
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

fn log_mean(w: &DVector<f64>) -> f64 {
    w.iter().map(|v| v.max(LOG_FLOOR).ln()).sum::<f64>() / w.len() as f64
}

fn project(alpha: &mut DVector<f64>, norm: &DVector<f64>) -> Result<()> {
    alpha.iter_mut().for_each(|a| *a = a.max(0.0));
    let s = norm.dot(alpha);
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Numerical("ratio normalization collapsed".into()));
    }
    *alpha /= s;
    Ok(())
}

/// KKT residual of the normalized problem: at an optimum the gradient
/// equals the constraint vector on the support and is dominated by it off
/// the support (the multiplier is exactly 1 for this program).
fn kkt_residual(alpha: &DVector<f64>, grad: &DVector<f64>, norm: &DVector<f64>) -> f64 {
    alpha
        .iter()
        .zip(grad.iter().zip(norm.iter()))
        .map(|(&a, (&g, &b))| if a > 0.0 { (g - b).abs() } else { (g - b).max(0.0) })
        .fold(0.0, f64::max)
}

/// Gradient projected onto the face of the feasible set: coordinates pinned
/// at zero that would decrease are frozen and the rest is made tangent to
/// `b^T alpha = 1`. Freezing changes the tangent correction, so the free set
/// is refined until it settles.
fn ascent_direction(alpha: &DVector<f64>, grad: &DVector<f64>, norm: &DVector<f64>) -> DVector<f64> {
    let b = alpha.len();
    let mut free: Vec<bool> = alpha.iter().map(|&a| a > 0.0).collect();
    let mut dir = DVector::zeros(b);
    for _ in 0..=b {
        let (mut bg, mut bb) = (0.0, 0.0);
        for l in (0..b).filter(|&l| free[l]) {
            bg += norm[l] * grad[l];
            bb += norm[l] * norm[l];
        }
        let c = if bb > 0.0 { bg / bb } else { 0.0 };
        let mut changed = false;
        for l in 0..b {
            let d = grad[l] - c * norm[l];
            if !free[l] && d > 0.0 {
                free[l] = true;
                changed = true;
            }
            dir[l] = if free[l] { d } else { 0.0 };
        }
        if !changed {
            break;
        }
    }
    dir
}

/// Fit with fixed centers.
pub fn kliep_fit_with_centers(
    x: &SampleSet,
    x_prime: &SampleSet,
    centers: &SampleSet,
    sigma: f64,
    options: &KliepOptions,
) -> Result<RatioModel> {
    x.check_same_dim(x_prime)?;
    let basis = GaussianBasis::new(centers.clone(), sigma)?;
    let kx: DMatrix<f64> = basis.design_matrix(x)?;
    let norm = column_means(&basis.design_matrix(x_prime)?);
    let total = norm.sum();
    if !(total > 0.0) {
        return Err(Error::Numerical(
            "denominator samples carry no kernel mass at this width".into(),
        ));
    }
    let n = x.len() as f64;
    let scale = 1.0 / norm.amax().max(f64::MIN_POSITIVE);

    let mut alpha = DVector::from_element(basis.size(), 1.0 / total);
    let mut w = &kx * &alpha;
    let mut obj = log_mean(&w);
    let mut trace = vec![obj];
    let mut step: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        let inv_w = w.map(|v| 1.0 / v.max(LOG_FLOOR));
        let grad = kx.tr_mul(&inv_w) / n;
        if kkt_residual(&alpha, &grad, &norm) * scale <= options.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let dir = ascent_direction(&alpha, &grad, &norm);
        let mut s = (step * 2.0).min(MAX_STEP);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut cand = &alpha + &dir * s;
            if project(&mut cand, &norm).is_ok() {
                let cw = &kx * &cand;
                let cobj = log_mean(&cw);
                let gain = grad.dot(&(&cand - &alpha));
                if cobj.is_finite() && gain > 0.0 && cobj >= obj + ARMIJO * gain {
                    accepted = Some((cand, cw, cobj));
                    break;
                }
            }
            s *= 0.5;
        }
        match accepted {
            Some((a, cw, cobj)) => {
                alpha = a;
                w = cw;
                obj = cobj;
                step = s;
                trace.push(obj);
            }
            // no ascent step at working precision
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok(RatioModel {
        basis,
        alpha,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Centers are up to `options.max_centers` numerator samples.
pub fn kliep_fit(
    x: &SampleSet,
    x_prime: &SampleSet,
    sigma: f64,
    options: &KliepOptions,
    rng: &mut Rng,
) -> Result<RatioModel> {
    let centers = select_from_pool(x, options.max_centers.max(1), rng)?;
    kliep_fit_with_centers(x, x_prime, &centers, sigma, options)
}

/// `(1/n) sum_i log max(w(x_i), 1e-12)`.
pub fn kliep_kl_estimate(model: &RatioModel, x: &SampleSet) -> Result<f64> {
    Ok(log_mean(&model.ratio(x)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KliepCvReport {
    pub sigmas: Vec<f64>,
    pub mean_scores: Vec<f64>,
    pub selected_sigma: f64,
}

/// Default width candidates: 5 values log-spaced over `[0.1 m, 2 m]`, `m`
/// the median pairwise distance of the numerator samples.
pub fn default_sigmas(x: &SampleSet) -> Result<Vec<f64>> {
    median_sigma_grid(x, 5, 0.1, 2.0)
}

/// Width chosen by the mean held-out `log w` over folds of the numerator
/// samples; centers are drawn once and shared by all folds and candidates.
pub fn kliep_fit_cv(
    x: &SampleSet,
    x_prime: &SampleSet,
    sigma_candidates: &[f64],
    folds: usize,
    options: &KliepOptions,
    rng: &mut Rng,
) -> Result<(RatioModel, KliepCvReport)> {
    if sigma_candidates.is_empty() {
        return Err(Error::invalid("sigma_candidates", "must be nonempty"));
    }
    let centers = select_from_pool(x, options.max_centers.max(1), rng)?;
    let assignment = assign_folds(x.len(), folds, rng)?;
    let splits = assignment
        .iter()
        .map(|f| Ok((x.select(&complement(x.len(), f))?, x.select(f)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = Vec::with_capacity(sigma_candidates.len());
    for &sigma in sigma_candidates {
        let mut total = 0.0;
        for (train, hold) in &splits {
            total += match kliep_fit_with_centers(train, x_prime, &centers, sigma, options) {
                Ok(m) => kliep_kl_estimate(&m, hold)?,
                Err(Error::Numerical(_)) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
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
        .ok_or_else(|| Error::Numerical("no usable KLIEP width".into()))?
        .0;
    let model = kliep_fit_with_centers(x, x_prime, &centers, sigma_candidates[best], options)?;
    Ok((
        model,
        KliepCvReport {
            sigmas: sigma_candidates.to_vec(),
            mean_scores: scores,
            selected_sigma: sigma_candidates[best],
        },
    ))
}
