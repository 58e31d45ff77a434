use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::{CvCandidate, CvReport, HyperGrid};
use crate::error::{Error, Result};
use crate::folds::assign_folds;
use crate::kernel::{gram_matrix, pseudo_cutoff, GaussianBasis};
use crate::rng::Rng;
use crate::sample::SampleSet;

/// Cross-validation engine for repeated re-splits of one fixed pool.
///
/// For every width the Gram matrix is diagonalized once, `H = Q diag(e) Q^T`,
/// and all pooled points are projected onto the eigenbasis. Any split of the
/// pool into signed groups can then be cross-validated over every lambda in
/// `O(N b)` per width instead of one factorization per candidate. The
/// permutation test leans on this: every permutation re-splits the same pool.
///
/// Scores agree with [`super::weighted_cv`] on the same centers and folds up
/// to rounding.
#[derive(Debug, Clone)]
pub struct SpectralCv {
    grid: HyperGrid,
    pooled_len: usize,
    spectra: Vec<Spectrum>,
}

#[derive(Debug, Clone)]
struct Spectrum {
    eigenvalues: DVector<f64>,
    cutoff: f64,
    /// Row `i` is `psi(pooled_i)^T Q`.
    projected: DMatrix<f64>,
}

impl Spectrum {
    fn inverse(&self, lambda: f64) -> DVector<f64> {
        self.eigenvalues.map(|e| {
            let s = e + lambda;
            if s > self.cutoff {
                1.0 / s
            } else {
                0.0
            }
        })
    }

    /// `(u^T diag(e) u, g^T u)` for `u = inv .* g`.
    fn forms(&self, g: &DVector<f64>, inv: &DVector<f64>) -> (f64, f64) {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for ((&gi, &ii), &e) in g.iter().zip(inv.iter()).zip(self.eigenvalues.iter()) {
            let u = gi * ii;
            quad += e * u * u;
            lin += gi * u;
        }
        (quad, lin)
    }
}

impl SpectralCv {
    pub fn new(pooled: &SampleSet, centers: &SampleSet, grid: HyperGrid) -> Result<Self> {
        pooled.check_same_dim(centers)?;
        let spectra = grid
            .sigmas()
            .par_iter()
            .map(|&sigma| {
                let basis = GaussianBasis::new(centers.clone(), sigma)?;
                let gram = gram_matrix(&basis);
                let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 0)
                    .ok_or_else(|| Error::Numerical("Gram eigendecomposition failed".into()))?;
                let cutoff = pseudo_cutoff(&eig.eigenvalues);
                let projected = basis.design_matrix(pooled)? * &eig.eigenvectors;
                Ok(Spectrum {
                    eigenvalues: eig.eigenvalues,
                    cutoff,
                    projected,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            pooled_len: pooled.len(),
            spectra,
        })
    }

    pub fn grid(&self) -> &HyperGrid {
        &self.grid
    }

    pub fn pooled_len(&self) -> usize {
        self.pooled_len
    }

    fn check_groups(&self, groups: &[(&[usize], f64)]) -> Result<()> {
        if groups.is_empty() {
            return Err(Error::Empty("groups"));
        }
        for (idx, _) in groups {
            if idx.is_empty() {
                return Err(Error::Empty("group"));
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= self.pooled_len) {
                return Err(Error::invalid("group index", format!("{bad} out of range")));
            }
        }
        Ok(())
    }

    /// Cross-validate the signed combination `sum_g w_g p_g` where group `g`
    /// holds the pooled points at the given indices. Folds are drawn per
    /// group in order, as in [`super::weighted_cv`].
    pub fn cross_validate(
        &self,
        groups: &[(&[usize], f64)],
        folds: usize,
        rng: &mut Rng,
    ) -> Result<CvReport> {
        self.check_groups(groups)?;
        let assignments = groups
            .iter()
            .map(|(idx, _)| assign_folds(idx.len(), folds, rng))
            .collect::<Result<Vec<_>>>()?;
        let mut candidates = Vec::with_capacity(self.grid.len());
        for (spec, &sigma) in self.spectra.iter().zip(self.grid.sigmas()) {
            let b = spec.eigenvalues.len();
            let mut rhs = vec![DVector::zeros(b); folds];
            let mut hold = vec![DVector::zeros(b); folds];
            for ((idx, w), fold_idx) in groups.iter().zip(&assignments) {
                let mut total = DVector::zeros(b);
                let mut fold_sums = vec![DVector::zeros(b); folds];
                for (t, fold) in fold_idx.iter().enumerate() {
                    for &k in fold {
                        fold_sums[t] += spec.projected.row(idx[k]).transpose();
                    }
                    total += &fold_sums[t];
                }
                let n = idx.len() as f64;
                for (t, fold) in fold_idx.iter().enumerate() {
                    let k = fold.len() as f64;
                    rhs[t].axpy(*w / (n - k), &(&total - &fold_sums[t]), 1.0);
                    hold[t].axpy(*w / k, &fold_sums[t], 1.0);
                }
            }
            for &lambda in self.grid.lambdas() {
                let inv = spec.inverse(lambda);
                let fold_scores: Vec<f64> = (0..folds)
                    .map(|t| {
                        let (quad, _) = spec.forms(&rhs[t], &inv);
                        let u = rhs[t].component_mul(&inv);
                        quad - 2.0 * hold[t].dot(&u)
                    })
                    .collect();
                let mean_score = fold_scores.iter().sum::<f64>() / folds as f64;
                candidates.push(CvCandidate {
                    sigma,
                    lambda,
                    mean_score,
                    fold_scores,
                });
            }
        }
        CvReport::from_candidates(candidates, folds)
    }

    /// Combined estimate `2 h^T theta - theta^T H theta` on all points of the
    /// groups at grid width `sigma_index` and regularization `lambda`.
    pub fn combined_l2(
        &self,
        groups: &[(&[usize], f64)],
        sigma_index: usize,
        lambda: f64,
    ) -> Result<f64> {
        self.check_groups(groups)?;
        let spec = self
            .spectra
            .get(sigma_index)
            .ok_or_else(|| Error::invalid("sigma_index", "out of range"))?;
        let b = spec.eigenvalues.len();
        let mut g = DVector::zeros(b);
        for (idx, w) in groups {
            let mut sum = DVector::zeros(b);
            for &i in *idx {
                sum += spec.projected.row(i).transpose();
            }
            g.axpy(*w / idx.len() as f64, &sum, 1.0);
        }
        let (quad, lin) = spec.forms(&g, &spec.inverse(lambda));
        Ok(2.0 * lin - quad)
    }

    /// Cross-validate, then return the combined estimate at the selection.
    pub fn select_and_estimate(
        &self,
        groups: &[(&[usize], f64)],
        folds: usize,
        rng: &mut Rng,
    ) -> Result<(CvReport, f64)> {
        let report = self.cross_validate(groups, folds, rng)?;
        let sigma_index = report.selected_index / self.grid.lambdas().len();
        let value = self.combined_l2(groups, sigma_index, report.selected_lambda)?;
        Ok((report, value))
    }
}
