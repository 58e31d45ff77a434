//! Permutation two-sample tests.
//!
//! A statistic is prepared once on the pooled sample and then evaluated on
//! arbitrary splits of it, so expensive pool-level work (centers, Gram
//! factorizations) is shared between the observed split and every
//! permutation.

use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::select_from_pool;
use crate::kliep::{self, KliepOptions};
use crate::lsdd::{CvOptions, HyperGrid, SpectralCv};
use crate::rng::{role, stream, Rng};
use crate::sample::SampleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub observed_stat: f64,
    pub permuted_stats: Vec<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
}

/// A statistic evaluated on splits of one pooled sample.
pub trait TwoSampleStatistic: Sync {
    fn prepare<'a>(&'a self, pooled: &'a SampleSet, rng: &mut Rng)
        -> Result<Box<dyn SplitStatistic + 'a>>;
}

/// A statistic bound to a pool; `first` and `second` index into it.
pub trait SplitStatistic: Sync {
    fn evaluate(&self, first: &[usize], second: &[usize], rng: &mut Rng) -> Result<f64>;
}

/// Adapts a plain function of two sample sets.
pub struct FnStatistic<F>(pub F);

impl<F> TwoSampleStatistic for FnStatistic<F>
where
    F: Fn(&SampleSet, &SampleSet, &mut Rng) -> Result<f64> + Sync,
{
    fn prepare<'a>(
        &'a self,
        pooled: &'a SampleSet,
        _rng: &mut Rng,
    ) -> Result<Box<dyn SplitStatistic + 'a>> {
        Ok(Box::new(BoundFn { f: &self.0, pooled }))
    }
}

struct BoundFn<'a, F> {
    f: &'a F,
    pooled: &'a SampleSet,
}

impl<F> SplitStatistic for BoundFn<'_, F>
where
    F: Fn(&SampleSet, &SampleSet, &mut Rng) -> Result<f64> + Sync,
{
    fn evaluate(&self, first: &[usize], second: &[usize], rng: &mut Rng) -> Result<f64> {
        (self.f)(&self.pooled.select(first)?, &self.pooled.select(second)?, rng)
    }
}

/// LSDD combined L2 estimate with cross-validated hyperparameters.
///
/// Centers are drawn once from the pool (all pooled points when they fit
/// under `max_centers`). When no grid is given the median heuristic is
/// applied to the pool, which is invariant under permutation.
#[derive(Debug, Clone, Default)]
pub struct LsddStatistic {
    pub grid: Option<HyperGrid>,
    pub options: CvOptions,
}

struct PreparedLsdd {
    engine: SpectralCv,
    folds: usize,
}

impl TwoSampleStatistic for LsddStatistic {
    fn prepare<'a>(
        &'a self,
        pooled: &'a SampleSet,
        rng: &mut Rng,
    ) -> Result<Box<dyn SplitStatistic + 'a>> {
        let grid = match &self.grid {
            Some(g) => g.clone(),
            None => HyperGrid::median_heuristic(pooled)?,
        };
        let centers = select_from_pool(pooled, self.options.max_centers.max(1), rng)?;
        Ok(Box::new(PreparedLsdd {
            engine: SpectralCv::new(pooled, &centers, grid)?,
            folds: self.options.folds,
        }))
    }
}

impl SplitStatistic for PreparedLsdd {
    fn evaluate(&self, first: &[usize], second: &[usize], rng: &mut Rng) -> Result<f64> {
        let groups = [(first, 1.0), (second, -1.0)];
        Ok(self.engine.select_and_estimate(&groups, self.folds, rng)?.1)
    }
}

/// KLIEP KL estimate with the kernel width chosen by likelihood
/// cross-validation. Default width candidates come from the pool.
#[derive(Debug, Clone)]
pub struct KliepStatistic {
    pub sigmas: Option<Vec<f64>>,
    pub folds: usize,
    pub options: KliepOptions,
}

impl Default for KliepStatistic {
    fn default() -> Self {
        Self {
            sigmas: None,
            folds: crate::folds::DEFAULT_FOLDS,
            options: KliepOptions::default(),
        }
    }
}

struct PreparedKliep<'a> {
    pooled: &'a SampleSet,
    sigmas: Vec<f64>,
    folds: usize,
    options: KliepOptions,
}

impl TwoSampleStatistic for KliepStatistic {
    fn prepare<'a>(
        &'a self,
        pooled: &'a SampleSet,
        _rng: &mut Rng,
    ) -> Result<Box<dyn SplitStatistic + 'a>> {
        let sigmas = match &self.sigmas {
            Some(s) => s.clone(),
            None => kliep::default_sigmas(pooled)?,
        };
        Ok(Box::new(PreparedKliep {
            pooled,
            sigmas,
            folds: self.folds,
            options: self.options,
        }))
    }
}

impl SplitStatistic for PreparedKliep<'_> {
    fn evaluate(&self, first: &[usize], second: &[usize], rng: &mut Rng) -> Result<f64> {
        let x = self.pooled.select(first)?;
        let y = self.pooled.select(second)?;
        let (model, _) = kliep::kliep_fit_cv(&x, &y, &self.sigmas, self.folds, &self.options, rng)?;
        kliep::kliep_kl_estimate(&model, &x)
    }
}

/// Permutation test of `p = p'`.
///
/// The statistic is computed on the observed split and on `permutations`
/// random re-splits of the pool that preserve the sample sizes. The p-value
/// is `(1 + #{permuted >= observed}) / (1 + permutations)` and the null is
/// rejected when it is at most `alpha`. Every permutation draws from its own
/// stream derived from one seed taken from `rng`, so results do not depend
/// on thread scheduling.
pub fn permutation_test(
    x: &SampleSet,
    x_prime: &SampleSet,
    statistic: &dyn TwoSampleStatistic,
    permutations: usize,
    alpha: f64,
    rng: &mut Rng,
) -> Result<TestResult> {
    if permutations == 0 {
        return Err(Error::invalid("permutations", "must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if x.is_empty() || x_prime.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let pooled = x.concat(x_prime)?;
    let n = x.len();
    let total = pooled.len();
    let base = rng.next_u64();

    let prepared = statistic.prepare(&pooled, &mut stream(base, &[role::CENTERS]))?;
    let first: Vec<usize> = (0..n).collect();
    let second: Vec<usize> = (n..total).collect();
    let observed = prepared.evaluate(&first, &second, &mut stream(base, &[role::STATISTIC]))?;
    if !observed.is_finite() {
        return Err(Error::Numerical(format!("observed statistic is {observed}")));
    }

    let permuted_stats = (0..permutations)
        .into_par_iter()
        .map(|i| {
            let mut r = stream(base, &[role::PERMUTATION, i as u64]);
            let mut perm: Vec<usize> = (0..total).collect();
            perm.shuffle(&mut r);
            let (a, b) = perm.split_at(n);
            let v = prepared
                .evaluate(a, b, &mut r)
                .map_err(|e| Error::Permutation { index: i, source: Box::new(e) })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Permutation {
                    index: i,
                    source: Box::new(Error::Numerical(format!("statistic is {v}"))),
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let exceed = permuted_stats.iter().filter(|&&s| s >= observed).count();
    let p_value = (1 + exceed) as f64 / (1 + permutations) as f64;
    Ok(TestResult {
        observed_stat: observed,
        permuted_stats,
        p_value,
        reject: p_value <= alpha,
        alpha,
    })
}
