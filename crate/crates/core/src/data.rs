//! Dense row-major point sets: high-dimensional samples and their embeddings.

use crate::error::{Error, Result};
use crate::Scalar;

/// `N x D` samples with optional integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T> {
    n: usize,
    dim: usize,
    values: Vec<T>,
    labels: Option<Vec<i64>>,
}

impl<T: Scalar> DataMatrix<T> {
    /// Builds a matrix from row-major `values`. Requires `N >= 2`, `D >= 1`
    /// and finite entries.
    pub fn new(n: usize, dim: usize, values: Vec<T>, labels: Option<Vec<i64>>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 samples, got {n}")));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if values.len() != n * dim {
            return Err(Error::invalid(format!(
                "expected {} values for {n}x{dim}, got {}",
                n * dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::invalid(format!(
                    "{} labels for {n} samples",
                    l.len()
                )));
            }
        }
        Ok(Self {
            n,
            dim,
            values,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<T>], labels: Option<Vec<i64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::invalid(format!("row {i} has a different length")));
        }
        Self::new(rows.len(), dim, rows.concat(), labels)
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Option<Vec<i64>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.n {
                return Err(Error::invalid(format!(
                    "{} labels for {} samples",
                    l.len(),
                    self.n
                )));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Reorders samples (and labels): row `k` of the result is row `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let values = order
            .iter()
            .flat_map(|&i| self.row(i).iter().copied())
            .collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| order.iter().map(|&i| l[i]).collect());
        Self {
            n: self.n,
            dim: self.dim,
            values,
            labels,
        }
    }

    /// Full `N x N` table of squared Euclidean distances.
    pub fn squared_distances(&self) -> Vec<T> {
        squared_distances(&self.values, self.n, self.dim)
    }
}

/// `N x d` low-dimensional coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    n: usize,
    dim: usize,
    coords: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(n: usize, dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if coords.len() != n * dim {
            return Err(Error::invalid(format!(
                "expected {} coordinates for {n}x{dim}, got {}",
                n * dim,
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding contains non-finite coordinates"));
        }
        Ok(Self { n, dim, coords })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("ragged embedding rows"));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub(crate) fn from_raw(n: usize, dim: usize, coords: Vec<T>) -> Self {
        debug_assert_eq!(coords.len(), n * dim);
        Self { n, dim, coords }
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }

    pub fn squared_distances(&self) -> Vec<T> {
        squared_distances(&self.coords, self.n, self.dim)
    }

    /// Treats the embedding as a point set, e.g. for co-ranking against itself.
    pub fn to_data(&self) -> Result<DataMatrix<T>> {
        DataMatrix::new(self.n, self.dim, self.coords.clone(), None)
    }
}

/// Squared Euclidean distance between two equal-length rows.
#[inline]
pub(crate) fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, v| acc + v)
}

/// Row-major `n x n` squared distances; symmetric with an exact zero diagonal.
pub(crate) fn squared_distances<T: Scalar>(values: &[T], n: usize, dim: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    squared_distances_into(values, n, dim, &mut out);
    out
}

/// In-place variant of [`squared_distances`]; `out` must hold `n * n` entries.
pub(crate) fn squared_distances_into<T: Scalar>(values: &[T], n: usize, dim: usize, out: &mut [T]) {
    for i in 0..n {
        out[i * n + i] = T::zero();
    }
    for_each_upper_pair(n, |i, j| {
        let d = sq_dist(
            &values[i * dim..(i + 1) * dim],
            &values[j * dim..(j + 1) * dim],
        );
        out[i * n + j] = d;
        out[j * n + i] = d;
    });
}

const TILE: usize = 64;

/// Visits every pair `i < j` exactly once, in square tiles so that mirrored
/// writes to `[j * n + i]` stay cache-resident.
#[inline]
pub(crate) fn for_each_upper_pair(n: usize, mut f: impl FnMut(usize, usize)) {
    for bi in (0..n).step_by(TILE) {
        let ei = (bi + TILE).min(n);
        for bj in (bi..n).step_by(TILE) {
            let ej = (bj + TILE).min(n);
            for i in bi..ei {
                for j in bj.max(i + 1)..ej {
                    f(i, j);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(DataMatrix::<f64>::new(1, 2, vec![0.0, 1.0], None).is_err());
        assert!(DataMatrix::<f64>::new(2, 0, vec![], None).is_err());
        assert!(DataMatrix::new(2, 1, vec![0.0, f64::NAN], None).is_err());
        assert!(DataMatrix::new(2, 1, vec![0.0, 1.0], Some(vec![1])).is_err());
        assert!(DataMatrix::new(2, 1, vec![0.0, 1.0], Some(vec![1, 2])).is_ok());
    }

    #[test]
    fn distances_are_symmetric() {
        let m =
            DataMatrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![1.0, 0.0]], None).unwrap();
        let d = m.squared_distances();
        assert_eq!(d[1], 25.0);
        assert_eq!(d[3], 25.0);
        assert_eq!(d[5], 20.0);
        assert_eq!(d[4], 0.0);
    }
}
