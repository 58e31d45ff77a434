//! Gaussian basis functions and the linear algebra shared by every
//! estimator: the analytic Gram matrix `H`, the empirical mean-difference
//! vector `h`, and the regularized solve `(H + lambda I)^{-1} h`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sample::{check_dim, sq_dist, SampleSet};

/// Default cap on the number of kernel centers.
pub const DEFAULT_MAX_CENTERS: usize = 300;

/// Isotropic Gaussian basis `psi_l(x) = exp(-|x - c_l|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBasis {
    centers: SampleSet,
    width: f64,
}

impl GaussianBasis {
    pub fn new(centers: SampleSet, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive and finite, got {width}")));
        }
        Ok(Self { centers, width })
    }

    pub fn centers(&self) -> &SampleSet {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    /// Number of basis functions `b`.
    pub fn size(&self) -> usize {
        self.centers.len()
    }

    /// Same centers, different width.
    pub fn with_width(&self, width: f64) -> Result<Self> {
        Self::new(self.centers.clone(), width)
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        let scale = -0.5 / (self.width * self.width);
        Ok(DVector::from_iterator(
            self.size(),
            self.centers.iter().map(|c| (scale * sq_dist(x, c)).exp()),
        ))
    }

    /// `n x b` matrix whose row `i` is `psi(x_i)^T`.
    pub fn design_matrix(&self, xs: &SampleSet) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), xs.dim())?;
        let scale = -0.5 / (self.width * self.width);
        Ok(DMatrix::from_fn(xs.len(), self.size(), |i, l| {
            (scale * sq_dist(xs.point(i), self.centers.point(l))).exp()
        }))
    }

    /// Empirical mean `(1/n) sum_i psi(x_i)`.
    pub fn empirical_mean(&self, xs: &SampleSet) -> Result<DVector<f64>> {
        let design = self.design_matrix(xs)?;
        Ok(column_means(&design))
    }
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Coefficient vector `theta` of a linear-in-parameter model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients(DVector<f64>);

impl Coefficients {
    pub fn new(theta: DVector<f64>) -> Result<Self> {
        if theta.iter().all(|v| v.is_finite()) {
            Ok(Self(theta))
        } else {
            Err(Error::Numerical("non-finite coefficient".into()))
        }
    }

    pub fn zeros(b: usize) -> Self {
        Self(DVector::zeros(b))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Gram matrix `H` and mean-difference vector `h` for one basis and one
/// pair of sample sets.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPair {
    pub gram: DMatrix<f64>,
    pub mean_diff: DVector<f64>,
}

impl DesignPair {
    pub fn new(basis: &GaussianBasis, x: &SampleSet, x_prime: &SampleSet) -> Result<Self> {
        Ok(Self {
            gram: gram_matrix(basis),
            mean_diff: mean_diff_vector(basis, x, x_prime)?,
        })
    }

    pub fn size(&self) -> usize {
        self.mean_diff.len()
    }

    pub(crate) fn check_theta(&self, theta: &Coefficients) -> Result<()> {
        if theta.len() != self.size() || self.gram.nrows() != self.size() {
            return Err(Error::SizeMismatch {
                what: "coefficients",
                expected: self.size(),
                found: theta.len(),
            });
        }
        Ok(())
    }
}

/// Empirical mean and covariance (normalized by `n`) of `psi(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Kernel centers: all pooled points when they fit under `max_centers`,
/// otherwise a uniform subset drawn without replacement.
pub fn select_centers(
    x: &SampleSet,
    x_prime: &SampleSet,
    max_centers: usize,
    rng: &mut Rng,
) -> Result<SampleSet> {
    if max_centers == 0 {
        return Err(Error::invalid("max_centers", "must be at least 1"));
    }
    let pooled = x.concat(x_prime)?;
    select_from_pool(&pooled, max_centers, rng)
}

pub fn select_from_pool(
    pooled: &SampleSet,
    max_centers: usize,
    rng: &mut Rng,
) -> Result<SampleSet> {
    if pooled.len() <= max_centers {
        return Ok(pooled.clone());
    }
    let picks = index::sample(rng, pooled.len(), max_centers).into_vec();
    pooled.select(&picks)
}

pub fn basis_eval(basis: &GaussianBasis, x: &[f64]) -> Result<DVector<f64>> {
    basis.eval(x)
}

/// `H_{l,l'} = (pi sigma^2)^{d/2} exp(-|c_l - c_l'|^2 / (4 sigma^2))`.
pub fn gram_matrix(basis: &GaussianBasis) -> DMatrix<f64> {
    let s2 = basis.width * basis.width;
    let norm = (PI * s2).powf(basis.dim() as f64 / 2.0);
    let scale = -0.25 / s2;
    let c = &basis.centers;
    let b = basis.size();
    let mut h = DMatrix::from_element(b, b, norm);
    for l in 0..b {
        for m in (l + 1)..b {
            let v = norm * (scale * sq_dist(c.point(l), c.point(m))).exp();
            h[(l, m)] = v;
            h[(m, l)] = v;
        }
    }
    h
}

/// `h = (1/n) sum psi(x_i) - (1/n') sum psi(x'_i)`.
pub fn mean_diff_vector(
    basis: &GaussianBasis,
    x: &SampleSet,
    x_prime: &SampleSet,
) -> Result<DVector<f64>> {
    x.check_same_dim(x_prime)?;
    Ok(basis.empirical_mean(x)? - basis.empirical_mean(x_prime)?)
}

/// Result of a regularized solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedSolution {
    pub theta: Coefficients,
    /// Set when Cholesky failed and an eigendecomposition pseudo-solve was
    /// used instead.
    pub used_fallback: bool,
}

/// Factorization of `H + lambda I`, reusable across right-hand sides.
pub(crate) enum Factor {
    Cholesky(Cholesky<f64, nalgebra::Dyn>),
    Pseudo(SymmetricEigen<f64, nalgebra::Dyn>),
}

impl Factor {
    pub(crate) fn new(gram: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("must be nonnegative, got {lambda}")));
        }
        let mut a = gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        // Reject pivots that are zero to working precision: Cholesky can
        // "succeed" on a rank-deficient H and return garbage.
        let max_diag = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let pivot_floor = max_diag * a.nrows() as f64 * f64::EPSILON;
        if let Some(ch) = Cholesky::new(a.clone()) {
            let l = ch.l_dirty();
            if l.diagonal().iter().all(|v| v.is_finite() && v * v > pivot_floor) {
                return Ok(Factor::Cholesky(ch));
            }
        }
        let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
            .ok_or_else(|| Error::SingularSystem("eigendecomposition did not converge".into()))?;
        if !eig.eigenvalues.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularSystem("non-finite eigenvalues".into()));
        }
        Ok(Factor::Pseudo(eig))
    }

    pub(crate) fn is_fallback(&self) -> bool {
        matches!(self, Factor::Pseudo(_))
    }

    pub(crate) fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factor::Cholesky(ch) => ch.solve(rhs),
            Factor::Pseudo(eig) => {
                let cutoff = pseudo_cutoff(&eig.eigenvalues);
                let q = &eig.eigenvectors;
                let mut coords = q.transpose() * rhs;
                for (i, &e) in eig.eigenvalues.iter().enumerate() {
                    let inv = if e > cutoff { 1.0 / e } else { 0.0 };
                    coords.row_mut(i).scale_mut(inv);
                }
                q * coords
            }
        }
    }

    pub(crate) fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        self.solve(&m).column(0).into_owned()
    }
}

/// Eigenvalues at or below this are treated as zero by pseudo-solves.
pub(crate) fn pseudo_cutoff(eigenvalues: &DVector<f64>) -> f64 {
    let max = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    max * eigenvalues.len() as f64 * f64::EPSILON
}

/// `theta = (H + lambda I)^{-1} h`, by Cholesky with an eigendecomposition
/// pseudo-solve when `H + lambda I` is numerically singular.
pub fn solve_regularized(design: &DesignPair, lambda: f64) -> Result<RegularizedSolution> {
    if design.gram.nrows() != design.size() || design.gram.ncols() != design.size() {
        return Err(Error::SizeMismatch {
            what: "gram matrix",
            expected: design.size(),
            found: design.gram.nrows(),
        });
    }
    let factor = Factor::new(&design.gram, lambda)?;
    let theta = Coefficients::new(factor.solve_vec(&design.mean_diff))
        .map_err(|_| Error::SingularSystem("solve produced non-finite coefficients".into()))?;
    Ok(RegularizedSolution {
        theta,
        used_fallback: factor.is_fallback(),
    })
}

/// Empirical mean and covariance of `psi(x)` over `x`.
pub fn basis_moments(basis: &GaussianBasis, x: &SampleSet) -> Result<BasisMoments> {
    let design = basis.design_matrix(x)?;
    let mean = column_means(&design);
    let mut centered = design;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let n = x.len() as f64;
    let mut cov = centered.transpose() * &centered / n;
    // symmetrize away rounding
    let sym = (&cov + cov.transpose()) * 0.5;
    cov = sym;
    Ok(BasisMoments { mean, cov })
}

/// Median of all pairwise Euclidean distances. Pools above 2000 points are
/// thinned by a fixed stride first.
pub fn median_pairwise_distance(points: &SampleSet) -> f64 {
    const CAP: usize = 2000;
    let n = points.len();
    let idx: Vec<usize> = if n > CAP {
        (0..CAP).map(|k| k * n / CAP).collect()
    } else {
        (0..n).collect()
    };
    let mut d = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(sq_dist(points.point(i), points.point(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// 2-norm condition number of a symmetric matrix; infinite when singular.
pub fn condition_number(sym: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
