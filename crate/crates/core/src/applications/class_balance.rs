//! Test-set class-prior estimation by L2 matching.
//!
//! The test density is modeled as `pi p_+ + (1 - pi) p_-` and `pi` is chosen
//! to minimize the estimated squared L2 distance between that mixture and
//! the test density. The density difference `pi p_+ + (1 - pi) p_- - p_test`
//! is linear in `pi`, so its LSDD solution is affine in `pi` and one
//! factorization serves every grid point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kde::{default_bandwidths, kde_fit_cv, kde_inner};
use crate::kernel::{column_means, gram_matrix, select_from_pool, Factor, GaussianBasis};
use crate::lsdd::{argmin_first, weighted_cv, CvOptions, CvReport, HyperGrid};
use crate::rng::Rng;
use crate::sample::SampleSet;

/// Training samples split by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub positive: SampleSet,
    pub negative: SampleSet,
}

impl LabeledSet {
    pub fn new(positive: SampleSet, negative: SampleSet) -> Result<Self> {
        if positive.is_empty() || negative.is_empty() {
            return Err(Error::Empty("class sample"));
        }
        positive.check_same_dim(&negative)?;
        Ok(Self { positive, negative })
    }

    /// From points with labels `+1` / `-1`.
    pub fn from_labeled(points: &SampleSet, labels: &[i8]) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::SizeMismatch {
                what: "labels",
                expected: points.len(),
                found: labels.len(),
            });
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            match l {
                1 => pos.push(i),
                -1 => neg.push(i),
                other => return Err(Error::invalid("labels", format!("expected +1 or -1, got {other}"))),
            }
        }
        Self::new(points.select(&pos)?, points.select(&neg)?)
    }

    pub fn dim(&self) -> usize {
        self.positive.dim()
    }

    /// All training points, positives first, with matching `+1/-1` labels.
    pub fn stacked(&self) -> Result<(SampleSet, Vec<f64>)> {
        let pts = self.positive.concat(&self.negative)?;
        let mut y = vec![1.0; self.positive.len()];
        y.resize(pts.len(), -1.0);
        Ok((pts, y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBalanceResult {
    pub pi_hat: f64,
    /// `(pi, estimated distance)` over the grid.
    pub curve: Vec<(f64, f64)>,
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    pub cv: Option<CvReport>,
}

/// `count` evenly spaced points over `[0, 1]`.
pub fn default_pi_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..count).map(|i| i as f64 / (count - 1) as f64).collect(),
    }
}

fn check_pi_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Empty("pi grid"));
    }
    if let Some(bad) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid("pi grid", format!("{bad} lies outside [0, 1]")));
    }
    Ok(())
}

fn pick(curve: &[(f64, f64)]) -> Result<f64> {
    argmin_first(curve.iter().map(|c| c.1))
        .map(|i| curve[i].0)
        .ok_or_else(|| Error::Numerical("no finite distance on the pi grid".into()))
}

/// LSDD-based prior estimate.
///
/// Kernel width and regularization are cross-validated once on the
/// balanced target `0.5 p_+ + 0.5 p_- - p_test`, with centers drawn from the
/// pooled training and test points, and then held fixed over the pi grid.
/// Each grid point's distance is the combined estimate
/// `2 h^T theta - theta^T H theta`.
pub fn class_balance_estimate(
    train: &LabeledSet,
    test: &SampleSet,
    pi_grid: &[f64],
    grid: &HyperGrid,
    options: CvOptions,
    rng: &mut Rng,
) -> Result<ClassBalanceResult> {
    check_pi_grid(pi_grid)?;
    train.positive.check_same_dim(test)?;
    if test.is_empty() {
        return Err(Error::Empty("test sample"));
    }
    let pooled = train.positive.concat(&train.negative)?.concat(test)?;
    let centers = select_from_pool(&pooled, options.max_centers.max(1), rng)?;
    let report = weighted_cv(
        &[(&train.positive, 0.5), (&train.negative, 0.5), (test, -1.0)],
        &centers,
        grid,
        options.folds,
        rng,
    )?;
    let curve = fixed_curve(train, test, &centers, report.selected_sigma, report.selected_lambda, pi_grid)?;
    Ok(ClassBalanceResult {
        pi_hat: pick(&curve)?,
        curve,
        sigma: Some(report.selected_sigma),
        lambda: Some(report.selected_lambda),
        cv: Some(report),
    })
}

/// Distance curve for fixed centers and hyperparameters.
pub fn fixed_curve(
    train: &LabeledSet,
    test: &SampleSet,
    centers: &SampleSet,
    sigma: f64,
    lambda: f64,
    pi_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_pi_grid(pi_grid)?;
    let basis = GaussianBasis::new(centers.clone(), sigma)?;
    let gram = gram_matrix(&basis);
    let b = basis.size();
    let mut means = DMatrix::zeros(b, 3);
    for (j, s) in [&train.positive, &train.negative, test].into_iter().enumerate() {
        means.set_column(j, &column_means(&basis.design_matrix(s)?));
    }
    let sol = Factor::new(&gram, lambda)?.solve(&means);
    let mean_col = |j: usize| means.column(j).into_owned();
    let sol_col = |j: usize| sol.column(j).into_owned();
    Ok(pi_grid
        .iter()
        .map(|&pi| {
            let w = [pi, 1.0 - pi, -1.0];
            let mut h = DVector::zeros(b);
            let mut theta = DVector::zeros(b);
            for j in 0..3 {
                h.axpy(w[j], &mean_col(j), 1.0);
                theta.axpy(w[j], &sol_col(j), 1.0);
            }
            let d = 2.0 * h.dot(&theta) - theta.dot(&(&gram * &theta));
            (pi, d)
        })
        .collect())
}

/// KDE baseline: each density is estimated separately with a
/// likelihood-cross-validated bandwidth, and the exact L2 distance of the
/// estimated mixture to the estimated test density is minimized.
pub fn class_balance_estimate_kde(
    train: &LabeledSet,
    test: &SampleSet,
    pi_grid: &[f64],
    folds: usize,
    rng: &mut Rng,
) -> Result<ClassBalanceResult> {
    check_pi_grid(pi_grid)?;
    train.positive.check_same_dim(test)?;
    let mut fit = |s: &SampleSet| kde_fit_cv(s, &default_bandwidths(s)?, folds, rng);
    let models = [fit(&train.positive)?, fit(&train.negative)?, fit(test)?];
    let mut g = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            g[i][j] = kde_inner(&models[i], &models[j])?;
            g[j][i] = g[i][j];
        }
    }
    let curve: Vec<(f64, f64)> = pi_grid
        .iter()
        .map(|&pi| {
            let w = [pi, 1.0 - pi, -1.0];
            let mut d = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    d += w[i] * w[j] * g[i][j];
                }
            }
            (pi, d)
        })
        .collect();
    Ok(ClassBalanceResult {
        pi_hat: pick(&curve)?,
        curve,
        sigma: None,
        lambda: None,
        cv: None,
    })
}
