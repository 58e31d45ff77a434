//! Change-point scoring on time series.
//!
//! The series is embedded into overlapping subsequences of length `k`.
//! At every evaluation time `t` the `r` subsequences starting at
//! `t .. t + r` are compared with the `r` starting at `t + r .. t + 2r`, and
//! the divergence between the two groups is the change score at the
//! boundary `t + r`.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::estimates_for_model;
use crate::error::{Error, Result};
use crate::kernel::select_centers;
use crate::kliep::{self, KliepOptions};
use crate::lsdd::{fit_cv, fit_fixed, median_sigma_grid, CvOptions, HyperGrid, DEFAULT_LAMBDAS};
use crate::rng::{stream, Rng};
use crate::sample::SampleSet;

/// Overlapping windows; row `i` is `series[i..i + k]` flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsequenceSet {
    pub windows: SampleSet,
    pub k: usize,
    /// Dimension of one series observation.
    pub m: usize,
}

pub fn build_subsequences(series: &[Vec<f64>], k: usize) -> Result<SubsequenceSet> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    let m = series.first().ok_or(Error::Empty("series"))?.len();
    if m == 0 {
        return Err(Error::Empty("series observation"));
    }
    if let Some(bad) = series.iter().find(|o| o.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, found: bad.len() });
    }
    if series.len() < k {
        return Err(Error::invalid("k", format!("series of length {} is shorter than {k}", series.len())));
    }
    let count = series.len() - k + 1;
    let mut data = Vec::with_capacity(count * k * m);
    for i in 0..count {
        for obs in &series[i..i + k] {
            data.extend_from_slice(obs);
        }
    }
    Ok(SubsequenceSet {
        windows: SampleSet::from_flat(data, k * m)?,
        k,
        m,
    })
}

/// Five widths log-spaced over `[m / 2, 2 m]` for the median pairwise
/// distance `m`, with the default lambdas.
///
/// Subsequence windows are high dimensional and only `r` points per group,
/// so widths far below `m` give basis functions that each cover a single
/// window; cross-validation then cannot tell candidates apart and the
/// combined estimate reduces to a self-match term of order `1 / (r lambda)`.
pub fn change_grid(pooled: &SampleSet) -> Result<HyperGrid> {
    HyperGrid::new(median_sigma_grid(pooled, 5, 0.5, 2.0)?, DEFAULT_LAMBDAS.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scorer {
    /// LSDD combined L2 estimate.
    LsddCombined,
    /// LSDD bias-corrected estimate clamped at zero.
    LsddPositivePart,
    /// KLIEP estimate of KL(earlier window || later window).
    Kliep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeConfig {
    pub k: usize,
    pub r: usize,
    pub stride: usize,
    pub scorer: Scorer,
    /// LSDD grid; [`change_grid`] over all subsequences of the series when
    /// absent, shared by every evaluation time.
    pub grid: Option<HyperGrid>,
    pub options: CvOptions,
    pub kliep: KliepOptions,
    /// Select hyperparameters at the first evaluation time only and reuse
    /// them everywhere else.
    pub frozen: bool,
}

impl Default for ChangeConfig {
    fn default() -> Self {
        Self {
            k: 5,
            r: 50,
            stride: 1,
            scorer: Scorer::LsddCombined,
            grid: None,
            options: CvOptions::default(),
            kliep: KliepOptions::default(),
            frozen: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeScoreSeries {
    /// Boundary index `t + r` in subsequence coordinates, which is also the
    /// series index where the later group's first window starts.
    pub times: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Frozen {
    Lsdd(f64, f64),
    Kliep(f64),
}

fn score_pair(
    a: &SampleSet,
    b: &SampleSet,
    config: &ChangeConfig,
    grid: &HyperGrid,
    frozen: Option<Frozen>,
    rng: &mut Rng,
) -> Result<(f64, Frozen)> {
    match config.scorer {
        Scorer::LsddCombined | Scorer::LsddPositivePart => {
            let model = match frozen {
                Some(Frozen::Lsdd(sigma, lambda)) => {
                    let centers = select_centers(a, b, config.options.max_centers, rng)?;
                    fit_fixed(a, b, sigma, lambda, &centers)?
                }
                _ => {
                    fit_cv(a, b, grid, config.options, rng)?.0
                }
            };
            let est = estimates_for_model(&model, a, b)?;
            let v = if config.scorer == Scorer::LsddCombined {
                est.combined
            } else {
                est.positive_part
            };
            Ok((v, Frozen::Lsdd(model.sigma(), model.lambda())))
        }
        Scorer::Kliep => {
            let sigmas = match frozen {
                Some(Frozen::Kliep(s)) => vec![s],
                _ => kliep::default_sigmas(a)?,
            };
            let (model, report) = kliep::kliep_fit_cv(a, b, &sigmas, config.options.folds, &config.kliep, rng)?;
            Ok((kliep::kliep_kl_estimate(&model, a)?, Frozen::Kliep(report.selected_sigma)))
        }
    }
}

/// Scores at every `stride`-th time for which both groups fit.
///
/// Each evaluation time draws from a stream keyed by the time itself, so
/// scores at a given time do not depend on the stride.
pub fn change_scores(series: &[Vec<f64>], config: &ChangeConfig, rng: &mut Rng) -> Result<ChangeScoreSeries> {
    if config.r < config.options.folds {
        return Err(Error::invalid("r", format!("must be at least the fold count {}", config.options.folds)));
    }
    if config.stride == 0 {
        return Err(Error::invalid("stride", "must be at least 1"));
    }
    let subs = build_subsequences(series, config.k)?;
    let w = subs.windows.len();
    if w < 2 * config.r {
        return Err(Error::invalid(
            "r",
            format!("{w} subsequences cannot hold two groups of {}", config.r),
        ));
    }
    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => change_grid(&subs.windows)?,
    };
    let base = rng.next_u64();
    let starts: Vec<usize> = (0..=w - 2 * config.r).step_by(config.stride).collect();
    let r = config.r;
    let group = |t: usize| -> Result<(SampleSet, SampleSet)> {
        let a: Vec<usize> = (t..t + r).collect();
        let b: Vec<usize> = (t + r..t + 2 * r).collect();
        Ok((subs.windows.select(&a)?, subs.windows.select(&b)?))
    };

    let frozen = if config.frozen {
        let (a, b) = group(0)?;
        Some(score_pair(&a, &b, config, &grid, None, &mut stream(base, &[0]))?.1)
    } else {
        None
    };
    let scores = starts
        .par_iter()
        .map(|&t| {
            let (a, b) = group(t)?;
            Ok(score_pair(&a, &b, config, &grid, frozen, &mut stream(base, &[t as u64]))?.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ChangeScoreSeries {
        times: starts.iter().map(|t| t + r).collect(),
        scores,
    })
}

/// Times of the `count` highest local maxima, each at least
/// `min_separation` away from any higher one, in time order.
pub fn top_peaks(series: &ChangeScoreSeries, count: usize, min_separation: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..series.scores.len()).filter(|&i| series.scores[i].is_finite()).collect();
    order.sort_by(|&a, &b| series.scores[b].total_cmp(&series.scores[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = Vec::new();
    for i in order {
        if picked.len() == count {
            break;
        }
        let t = series.times[i];
        if picked.iter().all(|&p| p.abs_diff(t) >= min_separation) {
            picked.push(t);
        }
    }
    picked.sort_unstable();
    picked
}
