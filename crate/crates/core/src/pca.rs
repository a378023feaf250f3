//! Principal component projection used to shrink raw inputs (e.g. flattened
//! images) to a few dozen dimensions before embedding.

use nalgebra::DMatrix;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    mean: Vec<T>,
    /// `k x D`, row-major, orthonormal rows.
    components: Vec<T>,
    explained_variance: Vec<T>,
}

impl<T: Scalar> PcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn component(&self, k: usize) -> &[T] {
        let d = self.input_dim();
        &self.components[k * d..(k + 1) * d]
    }

    /// Variance of the data along each component (divisor `N - 1`), nonincreasing.
    pub fn explained_variance(&self) -> &[T] {
        &self.explained_variance
    }

    /// Maps projected coordinates back to the input space.
    pub fn inverse_transform(&self, projected: &DataMatrix<T>) -> Result<DataMatrix<T>> {
        let k = self.n_components();
        if projected.dim() != k {
            return Err(Error::invalid(format!(
                "expected {k} projected dimensions, got {}",
                projected.dim()
            )));
        }
        let d = self.input_dim();
        let mut values = Vec::with_capacity(projected.n_samples() * d);
        for i in 0..projected.n_samples() {
            let z = projected.row(i);
            for c in 0..d {
                let mut v = self.mean[c];
                for (m, &zm) in z.iter().enumerate() {
                    v += zm * self.components[m * d + c];
                }
                values.push(v);
            }
        }
        DataMatrix::new(
            projected.n_samples(),
            d,
            values,
            projected.labels().map(<[_]>::to_vec),
        )
    }
}

/// Top-`k` principal directions of the centered data.
///
/// Each component's sign is chosen so its largest-magnitude entry (first one
/// on ties) is positive.
pub fn pca_fit<T: Scalar>(data: &DataMatrix<T>, k: usize) -> Result<PcaModel<T>> {
    let (n, d) = (data.n_samples(), data.dim());
    if k == 0 || k > n.min(d) {
        return Err(Error::invalid(format!(
            "number of components {k} must lie in 1..={}",
            n.min(d)
        )));
    }
    let mean: Vec<f64> = (0..d)
        .map(|c| (0..n).map(|i| data.row(i)[c].f64()).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, c| data.row(i)[c].f64() - mean[c]);
    if centered.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateData("data has zero variance".into()));
    }

    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let denom = (n.max(2) - 1) as f64;
    let mut components = Vec::with_capacity(k * d);
    let mut explained_variance = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let row: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let lead = row
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (c, &v)| {
                if v.abs() > best.1.abs() {
                    (c, v)
                } else {
                    best
                }
            })
            .1;
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        components.extend(row.iter().map(|&v| T::c(sign * v)));
        let s = svd.singular_values[idx];
        explained_variance.push(T::c(s * s / denom));
    }
    Ok(PcaModel {
        mean: mean.into_iter().map(T::c).collect(),
        components,
        explained_variance,
    })
}

/// Projects `(x - mean) . components^T`; labels are carried over.
pub fn pca_transform<T: Scalar>(
    model: &PcaModel<T>,
    data: &DataMatrix<T>,
) -> Result<DataMatrix<T>> {
    let d = model.input_dim();
    if data.dim() != d {
        return Err(Error::invalid(format!(
            "model expects {d} dimensions, data has {}",
            data.dim()
        )));
    }
    let k = model.n_components();
    let mut values = Vec::with_capacity(data.n_samples() * k);
    let mut centered = vec![T::zero(); d];
    for i in 0..data.n_samples() {
        for ((c, &x), &m) in centered.iter_mut().zip(data.row(i)).zip(&model.mean) {
            *c = x - m;
        }
        for m in 0..k {
            let comp = model.component(m);
            values.push(
                centered
                    .iter()
                    .zip(comp)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b),
            );
        }
    }
    DataMatrix::new(
        data.n_samples(),
        k,
        values,
        data.labels().map(<[_]>::to_vec),
    )
}
