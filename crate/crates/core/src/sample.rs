use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonempty set of points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    data: Vec<f64>,
    dim: usize,
}

impl SampleSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty("sample set"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::invalid("dim", "points must have at least one coordinate"));
        }
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            data.extend_from_slice(p);
        }
        Ok(Self { data, dim })
    }

    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if data.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        if data.len() % dim != 0 {
            return Err(Error::invalid(
                "data",
                format!("length {} is not a multiple of dim {dim}", data.len()),
            ));
        }
        Ok(Self { data, dim })
    }

    /// One-dimensional sample set from scalars.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.to_vec(), 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }

    /// Points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        Self::from_flat(data, self.dim)
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &SampleSet) -> Result<Self> {
        self.check_same_dim(other)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            data,
            dim: self.dim,
        })
    }

    pub(crate) fn check_same_dim(&self, other: &SampleSet) -> Result<()> {
        check_dim(self.dim, other.dim)
    }

    /// Component-wise mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.iter() {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_empty() {
        assert!(matches!(
            SampleSet::new(vec![vec![1.0, 2.0], vec![3.0]]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
        assert!(matches!(SampleSet::new(vec![]), Err(Error::Empty(_))));
        assert!(SampleSet::from_flat(vec![1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn select_and_concat() {
        let s = SampleSet::new(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let t = s.select(&[2, 0]).unwrap();
        assert_eq!(t.as_flat(), &[2.0, 0.0]);
        let u = s.concat(&t).unwrap();
        assert_eq!(u.len(), 5);
        assert_eq!(u.mean(), vec![1.0]);
    }
}
