//! Population divergences for the synthetic setups.

use std::f64::consts::PI;

use crate::error::{Error, Result};

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Squared L2 distance of the shifted-Gaussian pair, in any dimension.
pub fn gaussian_shift_l2(mu: f64) -> f64 {
    2.0 - 2.0 * (-PI * mu * mu).exp()
}

/// Squared L2 distance between the outlier mixture and `N(0, 1)`.
pub fn outlier_mixture_l2(eta: f64, mu: f64) -> f64 {
    let self_outlier = 1.0 / (2.0 * PI.sqrt() * 0.25);
    let self_base = 1.0 / (2.0 * PI.sqrt());
    let cross = normal_pdf(mu, 0.0, 1.0 + 1.0 / 16.0);
    eta * eta * (self_outlier + self_base - 2.0 * cross)
}

/// `KL(mixture || N(0, 1))` by composite Simpson quadrature.
pub fn outlier_mixture_kl(eta: f64, mu: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("eta", format!("must lie in [0, 1], got {eta}")));
    }
    let p = |x: f64| (1.0 - eta) * normal_pdf(x, 0.0, 1.0) + eta * normal_pdf(x, mu, 1.0 / 16.0);
    let lo = (-12.0f64).min(mu - 12.0);
    let hi = 12.0f64.max(mu + 12.0);
    let steps = 200_000;
    let h = (hi - lo) / steps as f64;
    let f = |x: f64| {
        let px = p(x);
        if px > 0.0 {
            // log p' written out so the tails do not underflow
            px * (px.ln() + 0.5 * x * x + 0.5 * (2.0 * PI).ln())
        } else {
            0.0
        }
    };
    let mut sum = f(lo) + f(hi);
    for i in 1..steps {
        sum += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok(sum * h / 3.0)
}
