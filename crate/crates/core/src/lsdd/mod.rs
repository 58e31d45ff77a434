//! Least-squares density-difference estimation.
//!
//! The model `f(x) = theta^T psi(x)` is fitted to `p - p'` by minimizing
//! `theta^T H theta - 2 h^T theta + lambda theta^T theta`, whose minimizer is
//! `(H + lambda I)^{-1} h`. Kernel width and regularization are chosen by
//! T-fold cross-validation of the hold-out squared error.

mod spectral;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds::{assign_folds, DEFAULT_FOLDS};
use crate::kernel::{
    gram_matrix, median_pairwise_distance, select_centers, solve_regularized, Coefficients,
    DesignPair, Factor, GaussianBasis, DEFAULT_MAX_CENTERS,
};
use crate::rng::Rng;
use crate::sample::SampleSet;

pub use spectral::SpectralCv;

/// Default regularization candidates.
pub const DEFAULT_LAMBDAS: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Number of width candidates produced by [`HyperGrid::median_heuristic`].
pub const DEFAULT_SIGMA_COUNT: usize = 10;

/// A fitted density-difference model.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityDiffModel {
    basis: GaussianBasis,
    theta: Coefficients,
    gram: DMatrix<f64>,
    lambda: f64,
    solver_fallback: bool,
}

impl DensityDiffModel {
    /// Assemble a model from parts. Fails if `theta` does not match the basis.
    pub fn new(basis: GaussianBasis, theta: Coefficients, lambda: f64) -> Result<Self> {
        if theta.len() != basis.size() {
            return Err(Error::SizeMismatch {
                what: "coefficients",
                expected: basis.size(),
                found: theta.len(),
            });
        }
        let gram = gram_matrix(&basis);
        Ok(Self {
            basis,
            theta,
            gram,
            lambda,
            solver_fallback: false,
        })
    }

    pub fn basis(&self) -> &GaussianBasis {
        &self.basis
    }

    pub fn theta(&self) -> &Coefficients {
        &self.theta
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn sigma(&self) -> f64 {
        self.basis.width()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// True when the fit needed the pseudo-solve fallback.
    pub fn solver_fallback(&self) -> bool {
        self.solver_fallback
    }

    /// The same model with coefficients multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.theta = Coefficients::new(self.theta.as_vector() * factor)
            .unwrap_or_else(|_| Coefficients::zeros(self.theta.len()));
        out
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.basis.eval(x)?.dot(self.theta.as_vector()))
    }
}

/// Candidate kernel widths and regularization strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    sigmas: Vec<f64>,
    lambdas: Vec<f64>,
}

impl HyperGrid {
    pub fn new(sigmas: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        check_increasing("sigmas", &sigmas, |v| v > 0.0)?;
        check_increasing("lambdas", &lambdas, |v| v >= 0.0)?;
        Ok(Self { sigmas, lambdas })
    }

    /// Widths log-spaced over `[0.1 m, 10 m]` where `m` is the median
    /// pairwise distance of `pooled`, with the default lambdas.
    pub fn median_heuristic(pooled: &SampleSet) -> Result<Self> {
        let sigmas = median_sigma_grid(pooled, DEFAULT_SIGMA_COUNT, 0.1, 10.0)?;
        Self::new(sigmas, DEFAULT_LAMBDAS.to_vec())
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len() * self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(sigma, lambda)` at flat candidate index (sigma-major).
    pub fn candidate(&self, index: usize) -> (f64, f64) {
        let nl = self.lambdas.len();
        (self.sigmas[index / nl], self.lambdas[index % nl])
    }
}

fn check_increasing(name: &'static str, v: &[f64], ok: impl Fn(f64) -> bool) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(name, "must be nonempty"));
    }
    if let Some(bad) = v.iter().find(|&&x| !(x.is_finite() && ok(x))) {
        return Err(Error::invalid(name, format!("invalid value {bad}")));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(name, "must be strictly increasing"));
    }
    Ok(())
}

/// `count` widths log-spaced over `[lo m, hi m]`, `m` the median pairwise
/// distance of `pooled` (1 when all points coincide).
pub fn median_sigma_grid(pooled: &SampleSet, count: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if count == 0 || !(lo > 0.0 && hi >= lo) {
        return Err(Error::invalid("sigma grid", "need count >= 1 and 0 < lo <= hi"));
    }
    let mut m = median_pairwise_distance(pooled);
    if !(m > 0.0 && m.is_finite()) {
        m = 1.0;
    }
    Ok(log_space(lo * m, hi * m, count))
}

pub(crate) fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Cross-validation options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub max_centers: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            max_centers: DEFAULT_MAX_CENTERS,
        }
    }
}

/// Scores for one `(sigma, lambda)` candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCandidate {
    pub sigma: f64,
    pub lambda: f64,
    pub mean_score: f64,
    pub fold_scores: Vec<f64>,
}

/// Outcome of a cross-validated grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Candidates in grid order (sigma-major).
    pub candidates: Vec<CvCandidate>,
    pub selected_index: usize,
    pub selected_sigma: f64,
    pub selected_lambda: f64,
    pub folds: usize,
}

impl CvReport {
    pub(crate) fn from_candidates(candidates: Vec<CvCandidate>, folds: usize) -> Result<Self> {
        let selected_index = argmin_first(candidates.iter().map(|c| c.mean_score))
            .ok_or_else(|| Error::Numerical("no finite cross-validation score".into()))?;
        let sel = &candidates[selected_index];
        Ok(Self {
            selected_sigma: sel.sigma,
            selected_lambda: sel.lambda,
            selected_index,
            candidates,
            folds,
        })
    }

    pub fn selected(&self) -> &CvCandidate {
        &self.candidates[self.selected_index]
    }
}

/// Index of the smallest finite value; earliest wins ties.
pub(crate) fn argmin_first(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if !v.is_finite() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Fit with fixed width, regularization and centers.
pub fn fit_fixed(
    x: &SampleSet,
    x_prime: &SampleSet,
    sigma: f64,
    lambda: f64,
    centers: &SampleSet,
) -> Result<DensityDiffModel> {
    Ok(fit_fixed_with_design(x, x_prime, sigma, lambda, centers)?.0)
}

/// As [`fit_fixed`], also returning the design the model was solved from.
pub fn fit_fixed_with_design(
    x: &SampleSet,
    x_prime: &SampleSet,
    sigma: f64,
    lambda: f64,
    centers: &SampleSet,
) -> Result<(DensityDiffModel, DesignPair)> {
    x.check_same_dim(x_prime)?;
    x.check_same_dim(centers)?;
    let basis = GaussianBasis::new(centers.clone(), sigma)?;
    let design = DesignPair::new(&basis, x, x_prime)?;
    let sol = solve_regularized(&design, lambda)?;
    let model = DensityDiffModel {
        basis,
        theta: sol.theta,
        gram: design.gram.clone(),
        lambda,
        solver_fallback: sol.used_fallback,
    };
    Ok((model, design))
}

pub fn predict(model: &DensityDiffModel, xs: &SampleSet) -> Result<Vec<f64>> {
    let design = model.basis.design_matrix(xs)?;
    Ok((design * model.theta.as_vector()).iter().copied().collect())
}

/// `int f(x)^2 dx = theta^T H theta`, with rounding-level negatives reported as 0.
pub fn squared_norm(model: &DensityDiffModel) -> f64 {
    quad_form(&model.gram, model.theta.as_vector())
}

pub(crate) fn quad_form(h: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    let v = theta.dot(&(h * theta));
    if v < 0.0 && v > -1e-10 {
        0.0
    } else {
        v
    }
}

/// Hold-out error `int f^2 - 2 mean_{X_t} f + 2 mean_{X'_t} f`.
pub fn cv_score(
    model: &DensityDiffModel,
    holdout_x: &SampleSet,
    holdout_x_prime: &SampleSet,
) -> Result<f64> {
    let fx = predict(model, holdout_x)?;
    let fxp = predict(model, holdout_x_prime)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(squared_norm(model) - 2.0 * mean(&fx) + 2.0 * mean(&fxp))
}

/// Cross-validated LSDD fit over `grid`; returns the refit on all data.
///
/// Centers are selected once from the pooled data and shared by every fold
/// and candidate. Each set is shuffled and split into folds independently.
pub fn fit_cv(
    x: &SampleSet,
    x_prime: &SampleSet,
    grid: &HyperGrid,
    options: CvOptions,
    rng: &mut Rng,
) -> Result<(DensityDiffModel, CvReport)> {
    x.check_same_dim(x_prime)?;
    let centers = select_centers(x, x_prime, options.max_centers, rng)?;
    let report = weighted_cv(&[(x, 1.0), (x_prime, -1.0)], &centers, grid, options.folds, rng)?;
    let model = fit_fixed(x, x_prime, report.selected_sigma, report.selected_lambda, &centers)?;
    Ok((model, report))
}

/// Cross-validation for a signed combination of sample sets.
///
/// The target is `sum_s w_s p_s`; its mean vector is
/// `h = sum_s w_s mean_s(psi)`, and the hold-out error of fold `t` is
/// `theta^T H theta - 2 sum_s w_s mean_{s,t}(f)`. With weights `(1, -1)`
/// this is the ordinary two-sample criterion.
pub fn weighted_cv(
    sets: &[(&SampleSet, f64)],
    centers: &SampleSet,
    grid: &HyperGrid,
    folds: usize,
    rng: &mut Rng,
) -> Result<CvReport> {
    if sets.is_empty() {
        return Err(Error::Empty("sample sets"));
    }
    for (s, _) in sets {
        s.check_same_dim(centers)?;
    }
    let assignments = sets
        .iter()
        .map(|(s, _)| assign_folds(s.len(), folds, rng))
        .collect::<Result<Vec<_>>>()?;

    let per_sigma: Vec<Vec<CvCandidate>> = grid
        .sigmas()
        .par_iter()
        .map(|&sigma| cv_one_sigma(sets, &assignments, centers, sigma, grid.lambdas(), folds))
        .collect::<Result<_>>()?;
    CvReport::from_candidates(per_sigma.into_iter().flatten().collect(), folds)
}

fn cv_one_sigma(
    sets: &[(&SampleSet, f64)],
    assignments: &[Vec<Vec<usize>>],
    centers: &SampleSet,
    sigma: f64,
    lambdas: &[f64],
    folds: usize,
) -> Result<Vec<CvCandidate>> {
    let basis = GaussianBasis::new(centers.clone(), sigma)?;
    let b = basis.size();
    let gram = gram_matrix(&basis);
    // column t: training mean vector / hold-out mean vector of fold t
    let mut rhs = DMatrix::zeros(b, folds);
    let mut hold = DMatrix::zeros(b, folds);
    for ((set, w), fold_idx) in sets.iter().zip(assignments) {
        let design = basis.design_matrix(set)?;
        let total = design.row_sum().transpose();
        let n = set.len() as f64;
        for (t, fold) in fold_idx.iter().enumerate() {
            let mut fold_sum = DVector::zeros(b);
            for &i in fold {
                fold_sum += design.row(i).transpose();
            }
            let k = fold.len() as f64;
            let train = (&total - &fold_sum) / (n - k);
            rhs.column_mut(t).axpy(*w, &train, 1.0);
            hold.column_mut(t).axpy(*w / k, &fold_sum, 1.0);
        }
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let factor = Factor::new(&gram, lambda)?;
            let thetas = factor.solve(&rhs);
            let fold_scores: Vec<f64> = (0..folds)
                .map(|t| {
                    let th = thetas.column(t).into_owned();
                    quad_form(&gram, &th) - 2.0 * hold.column(t).dot(&th)
                })
                .collect();
            let mean_score = fold_scores.iter().sum::<f64>() / folds as f64;
            Ok(CvCandidate {
                sigma,
                lambda,
                mean_score,
                fold_scores,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn pts(v: &[f64]) -> SampleSet {
        SampleSet::from_scalars(v).unwrap()
    }

    #[test]
    fn identical_sets_give_zero_model() {
        let x = pts(&[0.1, 0.5, -0.4, 1.2]);
        let m = fit_fixed(&x, &x, 0.5, 0.1, &x).unwrap();
        assert!(m.theta().as_vector().iter().all(|v| *v == 0.0));
        assert!(predict(&m, &pts(&[0.0, 3.0])).unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(squared_norm(&m), 0.0);
    }

    #[test]
    fn scalar_closed_form_fit() {
        let m = fit_fixed(&pts(&[0.0]), &pts(&[10.0]), 1.0, 0.0, &pts(&[0.0])).unwrap();
        let expected = (1.0 - (-50.0_f64).exp()) / PI.sqrt();
        assert_relative_eq!(m.theta().as_vector()[0], expected, epsilon = 1e-14);
        assert_relative_eq!(m.theta().as_vector()[0], 0.564190, epsilon = 1e-6);
    }

    #[test]
    fn predict_and_norm_on_fixed_theta() {
        let basis = GaussianBasis::new(pts(&[0.0]), 1.0).unwrap();
        let m = DensityDiffModel::new(basis, Coefficients::new(DVector::from_element(1, 2.0)).unwrap(), 0.0).unwrap();
        assert_eq!(predict(&m, &pts(&[0.0])).unwrap(), vec![2.0]);
        let unit = m.scaled(0.5);
        assert_relative_eq!(squared_norm(&unit), PI.sqrt(), epsilon = 1e-14);
        let p1 = predict(&m, &pts(&[0.3, -1.0])).unwrap();
        let p3 = predict(&m.scaled(3.0), &pts(&[0.3, -1.0])).unwrap();
        for (a, b) in p1.iter().zip(&p3) {
            assert_relative_eq!(3.0 * a, *b, epsilon = 1e-14);
        }
    }

    #[test]
    fn cv_score_cases() {
        let x = pts(&[0.0, 0.2, 0.4]);
        let y = pts(&[1.0, 1.3, 0.9]);
        let m = fit_fixed(&x, &y, 0.5, 0.1, &x.concat(&y).unwrap()).unwrap();
        let hx = pts(&[0.1, 0.7]);
        assert_eq!(cv_score(&m, &hx, &hx).unwrap(), squared_norm(&m));

        let (a, b) = (0.25, 1.1);
        let s = cv_score(&m, &pts(&[a]), &pts(&[b])).unwrap();
        let direct = squared_norm(&m) - 2.0 * m.eval(&[a]).unwrap() + 2.0 * m.eval(&[b]).unwrap();
        assert_relative_eq!(s, direct, epsilon = 1e-14);

        let zero = fit_fixed(&x, &x, 0.5, 0.1, &x).unwrap();
        assert_eq!(cv_score(&zero, &hx, &pts(&[2.0])).unwrap(), 0.0);
    }

    #[test]
    fn grid_validation() {
        assert!(HyperGrid::new(vec![], vec![1.0]).is_err());
        assert!(HyperGrid::new(vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(HyperGrid::new(vec![-1.0], vec![1.0]).is_err());
        assert!(HyperGrid::new(vec![1.0], vec![0.0, 0.5]).is_ok());
        let g = HyperGrid::new(vec![0.5, 1.0], vec![0.1, 1.0, 10.0]).unwrap();
        assert_eq!(g.candidate(4), (1.0, 1.0));
    }

    #[test]
    fn median_grid_spans_two_decades() {
        let g = HyperGrid::median_heuristic(&pts(&[0.0, 1.0, 3.0])).unwrap();
        assert_eq!(g.sigmas().len(), 10);
        assert_relative_eq!(g.sigmas()[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(g.sigmas()[9], 20.0, epsilon = 1e-12);
    }

    #[test]
    fn argmin_prefers_first() {
        assert_eq!(argmin_first([3.0, 1.0, 1.0, 2.0].into_iter()), Some(1));
        assert_eq!(argmin_first([f64::NAN, 2.0].into_iter()), Some(1));
        assert_eq!(argmin_first([f64::NAN].into_iter()), None);
    }

    #[test]
    fn cv_single_candidate_and_duplicates() {
        let x = pts(&[0.0, 0.3, 0.1, -0.2, 0.5, 0.8]);
        let y = pts(&[1.0, 1.4, 0.7, 1.9, 1.1, 0.6]);
        let grid = HyperGrid::new(vec![0.4], vec![0.01]).unwrap();
        let opts = CvOptions { folds: 3, ..Default::default() };
        let (m, r) = fit_cv(&x, &y, &grid, opts, &mut seeded(1)).unwrap();
        assert_eq!((r.selected_sigma, r.selected_lambda), (0.4, 0.01));
        assert_eq!(m.sigma(), 0.4);
        assert_eq!(r.candidates[0].fold_scores.len(), 3);

        // HyperGrid rejects repeated values, so duplicates are built by hand
        let centers = x.concat(&y).unwrap();
        let a = weighted_cv(&[(&x, 1.0), (&y, -1.0)], &centers, &grid, 3, &mut seeded(9)).unwrap();
        let b = weighted_cv(&[(&x, 1.0), (&y, -1.0)], &centers, &grid, 3, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        let mut first = a.candidates[0].clone();
        let copy = first.clone();
        first.lambda = 0.02;
        let dup = CvReport::from_candidates(vec![first, copy], 3).unwrap();
        assert_eq!(dup.candidates[0].mean_score, dup.candidates[1].mean_score);
        assert_eq!((dup.selected_index, dup.selected_lambda), (0, 0.02));
    }

    #[test]
    fn cv_matches_direct_holdout_scores() {
        let x = pts(&[0.0, 0.3, 0.1, -0.2, 0.5, 0.8, 0.05]);
        let y = pts(&[1.0, 1.4, 0.7, 1.9, 1.1, 0.6]);
        let grid = HyperGrid::new(vec![0.3, 0.9], vec![0.001, 0.5]).unwrap();
        let centers = x.concat(&y).unwrap();
        let report = weighted_cv(&[(&x, 1.0), (&y, -1.0)], &centers, &grid, 3, &mut seeded(4)).unwrap();

        let mut rng = seeded(4);
        let fx = assign_folds(x.len(), 3, &mut rng).unwrap();
        let fy = assign_folds(y.len(), 3, &mut rng).unwrap();
        for cand in &report.candidates {
            for t in 0..3 {
                let tx = x.select(&crate::folds::complement(x.len(), &fx[t])).unwrap();
                let ty = y.select(&crate::folds::complement(y.len(), &fy[t])).unwrap();
                let m = fit_fixed(&tx, &ty, cand.sigma, cand.lambda, &centers).unwrap();
                let s = cv_score(&m, &x.select(&fx[t]).unwrap(), &y.select(&fy[t]).unwrap()).unwrap();
                assert_relative_eq!(s, cand.fold_scores[t], epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn too_few_samples_for_folds() {
        let grid = HyperGrid::new(vec![1.0], vec![0.1]).unwrap();
        let r = fit_cv(&pts(&[0.0, 1.0]), &pts(&[0.0, 1.0, 2.0]), &grid, CvOptions::default(), &mut seeded(0));
        assert!(matches!(r, Err(Error::TooFewSamples { .. })));
    }
}
