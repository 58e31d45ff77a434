//! L2-distance estimators built on a fitted density-difference model.
//!
//! With `h` the empirical mean-difference vector and `theta` the regularized
//! solution, the plain estimators are `h^T theta` and `theta^T H theta`; the
//! combined estimator `2 h^T theta - theta^T H theta` cancels the first-order
//! regularization bias and is the default. The bias-corrected estimator
//! further subtracts `tr(H^{-1}(V_p / n + V_p' / n'))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{basis_moments, condition_number, BasisMoments, Coefficients, DesignPair, Factor};
use crate::lsdd::{fit_cv, quad_form, CvOptions, CvReport, DensityDiffModel, HyperGrid};
use crate::rng::Rng;
use crate::sample::SampleSet;

/// Every L2 estimate for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Estimates {
    pub plain_h: f64,
    pub plain_quadratic: f64,
    /// Recommended estimate.
    pub combined: f64,
    /// Advisory: can be negative and is unstable for ill-conditioned `H`.
    pub bias_corrected: f64,
    /// Advisory: `max(0, bias_corrected)`.
    pub positive_part: f64,
    /// 2-norm condition number of `H`.
    pub gram_condition: f64,
    /// True when the trace term needed a pseudo-inverse of `H`.
    pub trace_fallback: bool,
}

pub fn l2_plain_h(design: &DesignPair, theta: &Coefficients) -> Result<f64> {
    design.check_theta(theta)?;
    Ok(design.mean_diff.dot(theta.as_vector()))
}

pub fn l2_plain_quadratic(design: &DesignPair, theta: &Coefficients) -> Result<f64> {
    design.check_theta(theta)?;
    Ok(quad_form(&design.gram, theta.as_vector()))
}

/// `beta h^T theta + (1 - beta) theta^T H theta`.
pub fn l2_generalized(design: &DesignPair, theta: &Coefficients, beta: f64) -> Result<f64> {
    Ok(beta * l2_plain_h(design, theta)? + (1.0 - beta) * l2_plain_quadratic(design, theta)?)
}

pub fn l2_combined(design: &DesignPair, theta: &Coefficients) -> Result<f64> {
    l2_generalized(design, theta, 2.0)
}

/// Unregularized objective `theta^T H theta - 2 h^T theta`. At the
/// unregularized minimizer its negative equals the combined estimate.
pub fn unregularized_objective(design: &DesignPair, theta: &Coefficients) -> Result<f64> {
    design.check_theta(theta)?;
    let t = theta.as_vector();
    Ok(t.dot(&(&design.gram * t)) - 2.0 * design.mean_diff.dot(t))
}

/// `tr(H^{-1}(V_p / n + V_p' / n'))`, factorizing `H` itself (never
/// `H + lambda I`). The flag reports a pseudo-inverse fallback.
pub fn bias_correction(
    design: &DesignPair,
    moments_p: &BasisMoments,
    moments_p_prime: &BasisMoments,
    n: usize,
    n_prime: usize,
) -> Result<(f64, bool)> {
    let b = design.size();
    for m in [moments_p, moments_p_prime] {
        if m.cov.nrows() != b || m.cov.ncols() != b {
            return Err(Error::SizeMismatch {
                what: "covariance",
                expected: b,
                found: m.cov.nrows(),
            });
        }
    }
    if n == 0 || n_prime == 0 {
        return Err(Error::invalid("n", "sample sizes must be positive"));
    }
    let m = &moments_p.cov / n as f64 + &moments_p_prime.cov / n_prime as f64;
    let factor = Factor::new(&design.gram, 0.0)?;
    let x = factor.solve(&m);
    Ok((x.trace(), factor.is_fallback()))
}

pub fn l2_bias_corrected(
    design: &DesignPair,
    theta: &Coefficients,
    moments_p: &BasisMoments,
    moments_p_prime: &BasisMoments,
    n: usize,
    n_prime: usize,
) -> Result<f64> {
    let (correction, _) = bias_correction(design, moments_p, moments_p_prime, n, n_prime)?;
    Ok(l2_combined(design, theta)? - correction)
}

pub fn l2_positive_part(bias_corrected: f64) -> f64 {
    bias_corrected.max(0.0)
}

/// All estimators for one design and solution.
pub fn estimate_all(
    design: &DesignPair,
    theta: &Coefficients,
    moments_p: &BasisMoments,
    moments_p_prime: &BasisMoments,
    n: usize,
    n_prime: usize,
) -> Result<L2Estimates> {
    let plain_h = l2_plain_h(design, theta)?;
    let plain_quadratic = l2_plain_quadratic(design, theta)?;
    let combined = 2.0 * plain_h - plain_quadratic;
    let (correction, trace_fallback) = bias_correction(design, moments_p, moments_p_prime, n, n_prime)?;
    let bias_corrected = combined - correction;
    Ok(L2Estimates {
        plain_h,
        plain_quadratic,
        combined,
        bias_corrected,
        positive_part: l2_positive_part(bias_corrected),
        gram_condition: condition_number(&design.gram),
        trace_fallback,
    })
}

/// Estimates for a model fitted to `(x, x_prime)`.
pub fn estimates_for_model(
    model: &DensityDiffModel,
    x: &SampleSet,
    x_prime: &SampleSet,
) -> Result<L2Estimates> {
    let mp = basis_moments(model.basis(), x)?;
    let mq = basis_moments(model.basis(), x_prime)?;
    let design = DesignPair {
        gram: model.gram().clone(),
        mean_diff: &mp.mean - &mq.mean,
    };
    estimate_all(&design, model.theta(), &mp, &mq, x.len(), x_prime.len())
}

/// Cross-validated LSDD fit followed by every L2 estimate.
pub fn lsdd_l2(
    x: &SampleSet,
    x_prime: &SampleSet,
    grid: &HyperGrid,
    options: CvOptions,
    rng: &mut Rng,
) -> Result<(L2Estimates, DensityDiffModel, CvReport)> {
    let (model, report) = fit_cv(x, x_prime, grid, options, rng)?;
    let est = estimates_for_model(&model, x, x_prime)?;
    Ok((est, model, report))
}
