//! Synthetic data generators for the experiments.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::applications::LabeledSet;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sample::SampleSet;

fn gauss(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_points(n: usize, d: usize, mean0: f64, sd: f64, rng: &mut Rng) -> Result<SampleSet> {
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        data.push(mean0 + sd * gauss(rng));
        for _ in 1..d {
            data.push(sd * gauss(rng));
        }
    }
    SampleSet::from_flat(data, d)
}

/// Per-coordinate standard deviation of the shifted-Gaussian pair.
pub fn shift_sd() -> f64 {
    (4.0 * PI).powf(-0.5)
}

/// `x ~ N(mu e_1, I / (4 pi))`, `x' ~ N(0, I / (4 pi))`.
pub fn gen_gaussian_shift(d: usize, n: usize, n_prime: usize, mu: f64, rng: &mut Rng) -> Result<(SampleSet, SampleSet)> {
    if d == 0 {
        return Err(Error::invalid("d", "must be at least 1"));
    }
    let s = shift_sd();
    Ok((normal_points(n, d, mu, s, rng)?, normal_points(n_prime, d, 0.0, s, rng)?))
}

/// `x ~ (1 - eta) N(0, 1) + eta N(mu, 1/16)`, `x' ~ N(0, 1)`, scalar.
pub fn gen_outlier_mixture(n: usize, n_prime: usize, eta: f64, mu: f64, rng: &mut Rng) -> Result<(SampleSet, SampleSet)> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("eta", format!("must lie in [0, 1], got {eta}")));
    }
    let x: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < eta {
                mu + 0.25 * gauss(rng)
            } else {
                gauss(rng)
            }
        })
        .collect();
    let xp: Vec<f64> = (0..n_prime).map(|_| gauss(rng)).collect();
    Ok((SampleSet::from_scalars(&x)?, SampleSet::from_scalars(&xp)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBalanceData {
    pub train: LabeledSet,
    pub test: SampleSet,
    pub test_labels: Vec<i8>,
}

/// Classes `N(+-separation/2 e_1, I_d)`; each test point is positive with
/// probability `pi_star`.
pub fn gen_class_balance(
    d: usize,
    n_per_class: usize,
    n_test: usize,
    pi_star: f64,
    separation: f64,
    rng: &mut Rng,
) -> Result<ClassBalanceData> {
    if !(0.0..=1.0).contains(&pi_star) {
        return Err(Error::invalid("pi_star", format!("must lie in [0, 1], got {pi_star}")));
    }
    if d == 0 {
        return Err(Error::invalid("d", "must be at least 1"));
    }
    let half = separation / 2.0;
    let train = LabeledSet::new(
        normal_points(n_per_class, d, half, 1.0, rng)?,
        normal_points(n_per_class, d, -half, 1.0, rng)?,
    )?;
    let mut data = Vec::with_capacity(n_test * d);
    let mut test_labels = Vec::with_capacity(n_test);
    for _ in 0..n_test {
        let positive = rng.random::<f64>() < pi_star;
        test_labels.push(if positive { 1 } else { -1 });
        let p = normal_points(1, d, if positive { half } else { -half }, 1.0, rng)?;
        data.extend_from_slice(p.point(0));
    }
    Ok(ClassBalanceData {
        train,
        test: SampleSet::from_flat(data, d)?,
        test_labels,
    })
}

/// Scalar series whose mean alternates between `0` and `shift` at each
/// change time, plus i.i.d. `N(0, noise_sd^2)` noise.
pub fn gen_step_series(
    length: usize,
    change_times: &[usize],
    shift: f64,
    noise_sd: f64,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    if change_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("change_times", "must be strictly increasing"));
    }
    if let Some(&bad) = change_times.iter().find(|&&t| t == 0 || t >= length) {
        return Err(Error::invalid("change_times", format!("{bad} is outside 1..{length}")));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::invalid("noise_sd", "must be nonnegative"));
    }
    let mut segment = 0;
    Ok((0..length)
        .map(|i| {
            while segment < change_times.len() && i >= change_times[segment] {
                segment += 1;
            }
            let level = if segment % 2 == 1 { shift } else { 0.0 };
            vec![level + noise_sd * gauss(rng)]
        })
        .collect())
}
