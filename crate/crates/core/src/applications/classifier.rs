//! Importance-weighted regularized least-squares classification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::class_balance::LabeledSet;
use crate::error::{Error, Result};
use crate::kernel::GaussianBasis;
use crate::sample::SampleSet;

/// `f(x) = sum_j beta_j k(x, x_j)` over the training points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlsClassifier {
    pub basis: GaussianBasis,
    pub beta: DVector<f64>,
}

impl RlsClassifier {
    pub fn decision(&self, xs: &SampleSet) -> Result<DVector<f64>> {
        Ok(self.basis.design_matrix(xs)? * &self.beta)
    }

    /// `+1` where the decision value is nonnegative, else `-1`.
    pub fn predict(&self, xs: &SampleSet) -> Result<Vec<i8>> {
        Ok(self.decision(xs)?.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect())
    }

    pub fn error_rate(&self, xs: &SampleSet, labels: &[i8]) -> Result<f64> {
        if labels.len() != xs.len() {
            return Err(Error::SizeMismatch {
                what: "labels",
                expected: xs.len(),
                found: labels.len(),
            });
        }
        let wrong = self.predict(xs)?.iter().zip(labels).filter(|(a, b)| a != b).count();
        Ok(wrong as f64 / labels.len().max(1) as f64)
    }
}

/// Minimizes `sum_i w_i (f(x_i) - y_i)^2 + reg * |f|^2_RKHS` with class
/// weights `pi / n_+` for positives and `(1 - pi) / n_-` for negatives,
/// i.e. `(W K + reg I) beta = W y`.
pub fn weighted_rls_fit(train: &LabeledSet, pi: f64, width: f64, reg: f64) -> Result<RlsClassifier> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::invalid("pi", format!("must lie in [0, 1], got {pi}")));
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(Error::invalid("reg", format!("must be nonnegative, got {reg}")));
    }
    let (pts, y) = train.stacked()?;
    let basis = GaussianBasis::new(pts.clone(), width)?;
    let k = basis.design_matrix(&pts)?;
    let n_pos = train.positive.len();
    let w: Vec<f64> = (0..pts.len())
        .map(|i| if i < n_pos { pi / n_pos as f64 } else { (1.0 - pi) / train.negative.len() as f64 })
        .collect();
    let wd = DVector::from_vec(w);
    let mut a = DMatrix::from_diagonal(&wd) * k;
    for i in 0..a.nrows() {
        a[(i, i)] += reg;
    }
    let rhs = wd.component_mul(&DVector::from_vec(y));
    let beta = a
        .lu()
        .solve(&rhs)
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularSystem("weighted least-squares system".into()))?;
    Ok(RlsClassifier { basis, beta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> LabeledSet {
        let p = SampleSet::from_scalars(&[1.0, 1.5, 2.0, 2.5]).unwrap();
        let n = SampleSet::from_scalars(&[-1.0, -1.5, -2.0]).unwrap();
        LabeledSet::new(p, n).unwrap()
    }

    #[test]
    fn separates_training_data() {
        let c = weighted_rls_fit(&set(), 0.5, 0.7, 1e-4).unwrap();
        let (pts, _) = set().stacked().unwrap();
        assert_eq!(c.predict(&pts).unwrap(), vec![1, 1, 1, 1, -1, -1, -1]);
        assert_eq!(c.error_rate(&pts, &[1, 1, 1, 1, -1, -1, -1]).unwrap(), 0.0);
    }

    #[test]
    fn heavy_regularization_shrinks_coefficients() {
        let small = weighted_rls_fit(&set(), 0.5, 0.7, 1e-2).unwrap();
        let big = weighted_rls_fit(&set(), 0.5, 0.7, 1e6).unwrap();
        assert!(big.beta.amax() < 1e-6);
        assert!(big.beta.amax() < small.beta.amax());
    }

    #[test]
    fn invalid_inputs() {
        assert!(weighted_rls_fit(&set(), 1.5, 0.7, 1e-3).is_err());
        assert!(weighted_rls_fit(&set(), 0.5, -1.0, 1e-3).is_err());
        assert!(matches!(weighted_rls_fit(&set(), 1.0, 0.7, 0.0), Err(Error::SingularSystem(_))));
    }
}
