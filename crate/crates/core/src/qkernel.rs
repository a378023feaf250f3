//! q-Gaussian density and the low-dimensional similarity kernels.
//!
//! The embedding kernel for parameter `q` in `[1, 3)` is the unnormalized
//! q-Gaussian
//!
//! ```text
//! w(d2) = (1 + (q - 1) / (3 - q) * d2) ^ (-1 / (q - 1)),     q > 1
//! w(d2) = exp(-d2 / 2),                                       q = 1
//! ```
//!
//! which is the Cauchy kernel `1 / (1 + d2)` of t-SNE at `q = 2`.

use crate::affinity::{AffinityMatrix, Normalization};
use crate::data::{for_each_upper_pair, Embedding};
use crate::error::{Error, Result};
use crate::{Scalar, PROB_FLOOR};

/// Which low-dimensional similarity to build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// Row-normalized `exp(-d2)` conditionals (classic SNE).
    SneConditional,
    /// Globally normalized `exp(-d2)` joint (symmetric SNE).
    SneSymmetric,
    /// Globally normalized q-Gaussian joint; `q = 2` is t-SNE.
    QGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QKernelParams {
    q: f64,
    family: KernelFamily,
}

impl QKernelParams {
    pub fn sne_conditional() -> Self {
        Self {
            q: 1.0,
            family: KernelFamily::SneConditional,
        }
    }

    pub fn sne_symmetric() -> Self {
        Self {
            q: 1.0,
            family: KernelFamily::SneSymmetric,
        }
    }

    /// q-Gaussian kernel; `q` must lie in `[1, 3)`.
    pub fn qgaussian(q: f64) -> Result<Self> {
        if !(1.0..3.0).contains(&q) {
            return Err(Error::domain(format!(
                "embedding kernel needs q in [1, 3), got {q}"
            )));
        }
        Ok(Self {
            q,
            family: KernelFamily::QGaussian,
        })
    }

    pub fn tsne() -> Self {
        Self {
            q: 2.0,
            family: KernelFamily::QGaussian,
        }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn normalization(&self) -> Normalization {
        match self.family {
            KernelFamily::SneConditional => Normalization::Row,
            _ => Normalization::Global,
        }
    }

    /// Unnormalized similarity at squared distance `d2`.
    pub fn weight<T: Scalar>(&self, d2: T) -> T {
        PairKernel::new(self).weight(d2)
    }
}

/// Precomputed constants for evaluating one kernel over many pairs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairKernel<T> {
    kind: PairKind,
    /// `(q - 1) / (3 - q)`
    slope: T,
    /// `-1 / (q - 1)`
    exponent: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PairKind {
    /// `exp(-d2)`
    Gauss,
    /// `exp(-d2 / 2)`, the q = 1 limit
    GaussHalf,
    Cauchy,
    Power,
}

impl<T: Scalar> PairKernel<T> {
    pub(crate) fn new(params: &QKernelParams) -> Self {
        let q = params.q;
        let kind = match params.family {
            KernelFamily::SneConditional | KernelFamily::SneSymmetric => PairKind::Gauss,
            KernelFamily::QGaussian if q == 1.0 => PairKind::GaussHalf,
            KernelFamily::QGaussian if q == 2.0 => PairKind::Cauchy,
            KernelFamily::QGaussian => PairKind::Power,
        };
        let (slope, exponent) = if q == 1.0 {
            (0.0, 0.0)
        } else {
            ((q - 1.0) / (3.0 - q), -1.0 / (q - 1.0))
        };
        Self {
            kind,
            slope: T::c(slope),
            exponent: T::c(exponent),
        }
    }

    /// Whether the weight is an exponential whose normalization allows shifting `d2`.
    pub(crate) fn is_exponential(&self) -> bool {
        matches!(self.kind, PairKind::Gauss | PairKind::GaussHalf)
    }

    #[inline]
    pub(crate) fn weight(&self, d2: T) -> T {
        match self.kind {
            PairKind::Gauss => (-d2).exp(),
            PairKind::GaussHalf => (-d2 * T::c(0.5)).exp(),
            PairKind::Cauchy => T::one() / (T::one() + d2),
            PairKind::Power => (self.exponent * (T::one() + self.slope * d2).ln()).exp(),
        }
    }

    /// `(weight(d2), ln weight(d2))`; the weight is bit-identical to [`Self::weight`].
    #[inline]
    pub(crate) fn weight_and_log(&self, d2: T) -> (T, T) {
        match self.kind {
            PairKind::Gauss => ((-d2).exp(), -d2),
            PairKind::GaussHalf => {
                let l = -d2 * T::c(0.5);
                (l.exp(), l)
            }
            PairKind::Cauchy => {
                let u = T::one() + d2;
                (T::one() / u, -u.ln())
            }
            PairKind::Power => {
                let l = self.exponent * (T::one() + self.slope * d2).ln();
                (l.exp(), l)
            }
        }
    }

    /// The per-pair factor `(1 + slope * d2)^-1` multiplying `(y_i - y_j)` in the gradient.
    #[inline]
    pub(crate) fn gradient_factor(&self, d2: T) -> T {
        match self.kind {
            PairKind::Gauss | PairKind::GaussHalf => T::one(),
            PairKind::Cauchy => T::one() / (T::one() + d2),
            PairKind::Power => T::one() / (T::one() + self.slope * d2),
        }
    }
}

/// Low-dimensional affinities `r` for the chosen kernel family.
///
/// Entries are floored at the probability floor and renormalized; the
/// diagonal is exactly zero and joint families are exactly symmetric.
pub fn low_dim_affinities<T: Scalar>(
    embedding: &Embedding<T>,
    params: &QKernelParams,
) -> Result<AffinityMatrix<T>> {
    let n = embedding.n_points();
    if n < 2 {
        return Err(Error::invalid("need at least 2 embedded points"));
    }
    if !embedding.is_finite() {
        return Err(Error::invalid("embedding contains non-finite coordinates"));
    }
    if params.family == KernelFamily::QGaussian && !(1.0..3.0).contains(&params.q) {
        return Err(Error::domain(format!("q = {} outside [1, 3)", params.q)));
    }
    let dist = embedding.squared_distances();
    let mut probs = vec![T::zero(); n * n];
    fill_low_dim(&dist, n, params, &mut probs);
    Ok(AffinityMatrix::from_raw(
        n,
        probs,
        params.normalization(),
        params.family != KernelFamily::SneConditional,
    ))
}

/// Writes normalized, floored `r` for precomputed squared distances.
pub(crate) fn fill_low_dim<T: Scalar>(dist: &[T], n: usize, params: &QKernelParams, out: &mut [T]) {
    let kernel = PairKernel::<T>::new(params);
    match params.normalization() {
        Normalization::Row => fill_rows(dist, n, &kernel, out),
        Normalization::Global => fill_joint(dist, n, &kernel, out),
    }
}

fn fill_rows<T: Scalar>(dist: &[T], n: usize, kernel: &PairKernel<T>, out: &mut [T]) {
    let floor = T::c(PROB_FLOOR);
    for i in 0..n {
        let d = &dist[i * n..(i + 1) * n];
        let row = &mut out[i * n..(i + 1) * n];
        let shift = min_off_diagonal(d, i);
        for (j, r) in row.iter_mut().enumerate() {
            *r = if j == i {
                T::zero()
            } else {
                kernel.weight(d[j] - shift)
            };
        }
        normalize_row_with_floor(row, floor, i);
    }
}

fn fill_joint<T: Scalar>(dist: &[T], n: usize, kernel: &PairKernel<T>, out: &mut [T]) {
    let shift = if kernel.is_exponential() {
        (0..n)
            .map(|i| min_off_diagonal(&dist[i * n..(i + 1) * n], i))
            .fold(T::infinity(), T::min)
    } else {
        T::zero()
    };
    for i in 0..n {
        out[i * n + i] = T::zero();
    }
    for_each_upper_pair(n, |i, j| {
        let w = kernel.weight(dist[i * n + j] - shift);
        out[i * n + j] = w;
        out[j * n + i] = w;
    });

    // r = max(w / total, floor) / kept
    let floor = T::c(PROB_FLOOR);
    let total = out.iter().fold(T::zero(), |acc, &w| acc + w);
    let inv = T::one() / total;
    let mut kept = T::zero();
    for (i, row) in out.chunks_mut(n).enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if j != i {
                *v = (*v * inv).max(floor);
                kept += *v;
            }
        }
    }
    let inv = T::one() / kept;
    out.iter_mut().for_each(|v| *v *= inv);
}

fn min_off_diagonal<T: Scalar>(row: &[T], i: usize) -> T {
    row.iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(T::infinity(), T::min)
}

/// Normalizes nonnegative weights, floors the result, and renormalizes.
/// The `diagonal` entry stays exactly zero.
fn normalize_row_with_floor<T: Scalar>(values: &mut [T], floor: T, diagonal: usize) {
    let total = values.iter().fold(T::zero(), |acc, &w| acc + w);
    let inv = T::one() / total;
    let mut floored = T::zero();
    for (k, v) in values.iter_mut().enumerate() {
        if k != diagonal {
            *v = (*v * inv).max(floor);
            floored += *v;
        }
    }
    let inv = T::one() / floored;
    values.iter_mut().for_each(|v| *v *= inv);
}

/// Density parameters of a one-dimensional q-Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGaussianDensityParams<T> {
    pub mu: T,
    pub sigma: T,
    pub q: T,
}

impl<T: Scalar> QGaussianDensityParams<T> {
    pub fn new(mu: T, sigma: T, q: T) -> Result<Self> {
        let p = Self { mu, sigma, q };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > T::zero() && self.sigma.is_finite()) {
            return Err(Error::domain(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.q < T::c(3.0)) || !self.mu.is_finite() {
            return Err(Error::domain(format!(
                "q-Gaussian needs q < 3, got {}",
                self.q
            )));
        }
        Ok(())
    }
}

fn ln_beta<T: Scalar>(a: T, b: T) -> T {
    a.ln_gamma() + b.ln_gamma() - (a + b).ln_gamma()
}

/// Normalization constant `Z_q` of the q-Gaussian density, for `q < 3`, `q != 1`.
pub fn z_q<T: Scalar>(params: &QGaussianDensityParams<T>) -> Result<T> {
    params.validate()?;
    let q = params.q;
    let one = T::one();
    let two = T::c(2.0);
    let three = T::c(3.0);
    let half = T::c(0.5);
    if q == one {
        return Err(Error::domain(
            "Z_q is a limit at q = 1; use the Gaussian normalization",
        ));
    }
    let z = if q > one {
        ((three - q) / (q - one)).sqrt() * ln_beta((three - q) / (two * (q - one)), half).exp()
    } else {
        ((three - q) / (one - q)).sqrt() * ln_beta((two - q) / (one - q), half).exp()
    };
    Ok(z * params.sigma)
}

/// q-Gaussian density at `s`. Zero outside the support when `q < 1`; the
/// Gaussian density at `q = 1`.
pub fn qgaussian_pdf<T: Scalar>(s: T, params: &QGaussianDensityParams<T>) -> Result<T> {
    params.validate()?;
    let QGaussianDensityParams { mu, sigma, q } = *params;
    let one = T::one();
    let u = (s - mu) / sigma;
    if q == one {
        let norm = sigma * T::c((2.0 * std::f64::consts::PI).sqrt());
        return Ok((-u * u * T::c(0.5)).exp() / norm);
    }
    let base = one + (q - one) / (T::c(3.0) - q) * u * u;
    if base <= T::zero() {
        return Ok(T::zero());
    }
    Ok(base.powf(-one / (q - one)) / z_q(params)?)
}

/// q matching a Student-t with `dof` degrees of freedom: `1 + 2 / (dof + 1)`.
pub fn q_from_dof(dof: u64) -> f64 {
    assert!(dof >= 1, "degrees of freedom must be at least 1");
    1.0 + 2.0 / (dof as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn density(mu: f64, sigma: f64, q: f64) -> QGaussianDensityParams<f64> {
        QGaussianDensityParams::new(mu, sigma, q).unwrap()
    }

    fn random_embedding(n: usize, seed: u64) -> Embedding<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..n * 2).map(|_| rng.random_range(-3.0..3.0)).collect();
        Embedding::new(n, 2, coords).unwrap()
    }

    #[test]
    fn z_q_reference_values() {
        assert_relative_eq!(z_q(&density(0.0, 1.0, 2.0)).unwrap(), PI, epsilon = 1e-12);
        // Beta(3, 1/2) = 16 / 15
        assert_relative_eq!(
            z_q(&density(0.0, 1.0, 0.5)).unwrap(),
            5f64.sqrt() * 16.0 / 15.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            z_q(&density(0.0, 2.5, 2.0)).unwrap(),
            2.5 * PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn z_q_approaches_gaussian_normalization() {
        let target = (2.0 * PI).sqrt();
        let mut last_gap = f64::INFINITY;
        for k in 2..=8 {
            let q = 1.0 + 10f64.powi(-k);
            let gap = (z_q(&density(0.0, 1.0, q)).unwrap() - target).abs();
            assert!(gap < last_gap);
            last_gap = gap;
        }
        assert!(last_gap < 1e-6);
    }

    #[test]
    fn z_q_domain_errors() {
        assert!(QGaussianDensityParams::new(0.0, 1.0, 3.0).is_err());
        assert!(QGaussianDensityParams::new(0.0, 0.0, 2.0).is_err());
        assert!(z_q(&density(0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn pdf_reference_values() {
        assert_relative_eq!(
            qgaussian_pdf(0.0, &density(0.0, 1.0, 2.0)).unwrap(),
            1.0 / PI,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            qgaussian_pdf(0.0, &density(0.0, 1.0, 1.0)).unwrap(),
            1.0 / (2.0 * PI).sqrt(),
            epsilon = 1e-12
        );
        // Cauchy at one scale unit from the mode
        assert_relative_eq!(
            qgaussian_pdf(3.0, &density(1.0, 2.0, 2.0)).unwrap(),
            1.0 / (2.0 * PI * 2.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn pdf_is_zero_outside_compact_support() {
        // q = 0.5: support |s| < sqrt(5)
        let p = density(0.0, 1.0, 0.5);
        assert_eq!(qgaussian_pdf(2.3, &p).unwrap(), 0.0);
        assert_eq!(qgaussian_pdf(-5.0, &p).unwrap(), 0.0);
        assert!(qgaussian_pdf(2.2, &p).unwrap() > 0.0);
    }

    #[test]
    fn dof_mapping() {
        assert_eq!(q_from_dof(1), 2.0);
        assert_eq!(q_from_dof(3), 1.5);
        assert!((q_from_dof(1_000_000_000) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn two_points_split_mass_evenly() {
        let emb = Embedding::new(2, 2, vec![0.3, -1.0, 4.0, 2.0]).unwrap();
        for params in [
            QKernelParams::qgaussian(1.0).unwrap(),
            QKernelParams::qgaussian(1.7).unwrap(),
            QKernelParams::tsne(),
            QKernelParams::qgaussian(2.9).unwrap(),
            QKernelParams::sne_symmetric(),
        ] {
            let r = low_dim_affinities(&emb, &params).unwrap();
            assert_eq!(r.get(0, 1), 0.5);
            assert_eq!(r.get(1, 0), 0.5);
        }
        let r = low_dim_affinities(&emb, &QKernelParams::sne_conditional()).unwrap();
        assert_eq!(r.get(0, 1), 1.0);
    }

    #[test]
    fn three_point_tsne_example() {
        let emb = Embedding::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let r = low_dim_affinities(&emb, &QKernelParams::tsne()).unwrap();
        // weights 1/2, 1/10, 1/5 over both orderings: total 1.6
        assert_relative_eq!(r.get(0, 1), 0.3125, epsilon = 1e-15);
        assert_relative_eq!(r.get(0, 2), 0.0625, epsilon = 1e-15);
        assert_relative_eq!(r.get(1, 2), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn q2_matches_cauchy_kernel() {
        let emb = random_embedding(100, 9);
        let r = low_dim_affinities(&emb, &QKernelParams::qgaussian(2.0).unwrap()).unwrap();
        let d = emb.squared_distances();
        let mut z = 0.0;
        for i in 0..100 {
            for j in 0..100 {
                if i != j {
                    z += 1.0 / (1.0 + d[i * 100 + j]);
                }
            }
        }
        for i in 0..100 {
            for j in 0..100 {
                let expect = if i == j {
                    0.0
                } else {
                    1.0 / (1.0 + d[i * 100 + j]) / z
                };
                assert!((r.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn q1_branch_is_the_limit() {
        let emb = random_embedding(40, 2);
        let exact = low_dim_affinities(&emb, &QKernelParams::qgaussian(1.0).unwrap()).unwrap();
        let near =
            low_dim_affinities(&emb, &QKernelParams::qgaussian(1.0 + 1e-6).unwrap()).unwrap();
        for (a, b) in exact.probs().iter().zip(near.probs()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn heavier_tail_for_larger_q() {
        let w = |q: f64| QKernelParams::qgaussian(q).unwrap().weight(100.0f64);
        assert!(w(2.5) > w(2.0));
        assert!(w(2.0) > w(1.5));
        assert!(w(1.5) > w(1.0));
    }

    #[test]
    fn weights_decrease_and_stay_positive() {
        for q in [1.0, 1.1, 1.5, 2.0, 2.5, 2.9] {
            let k = QKernelParams::qgaussian(q).unwrap();
            let mut prev = f64::INFINITY;
            for step in 0..200 {
                let w = k.weight(step as f64 * 0.25);
                assert!(w > 0.0 && w < prev, "q {q} step {step}");
                prev = w;
            }
        }
    }

    #[test]
    fn families_are_normalized() {
        let emb = random_embedding(60, 4);
        for params in [
            QKernelParams::sne_conditional(),
            QKernelParams::sne_symmetric(),
            QKernelParams::qgaussian(1.0).unwrap(),
            QKernelParams::qgaussian(1.3).unwrap(),
            QKernelParams::qgaussian(2.6).unwrap(),
        ] {
            let r = low_dim_affinities(&emb, &params).unwrap();
            match params.normalization() {
                Normalization::Row => {
                    for i in 0..60 {
                        assert!((r.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    }
                }
                Normalization::Global => {
                    assert!((r.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    for i in 0..60 {
                        for j in 0..60 {
                            assert_eq!(r.get(i, j), r.get(j, i));
                        }
                    }
                }
            }
            for i in 0..60 {
                assert_eq!(r.get(i, i), 0.0);
            }
        }
    }

    #[test]
    fn far_points_hit_the_floor_without_zero_rows() {
        let emb =
            Embedding::from_rows(&[vec![0.0], vec![0.1], vec![1e4], vec![1e4 + 0.2]]).unwrap();
        let r = low_dim_affinities(&emb, &QKernelParams::sne_symmetric()).unwrap();
        assert!(r.get(0, 2) > 0.0);
        assert!((r.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let c = low_dim_affinities(&emb, &QKernelParams::sne_conditional()).unwrap();
        assert!(c.get(2, 0) > 0.0);
    }

    #[test]
    fn kernel_domain_errors() {
        assert!(QKernelParams::qgaussian(0.9).is_err());
        assert!(QKernelParams::qgaussian(3.0).is_err());
    }

    #[test]
    fn far_points_are_floored() {
        let mut coords: Vec<f64> = random_embedding(30, 11).coords().to_vec();
        coords.extend([40.0, 40.0, 41.0, 40.5]);
        let emb = Embedding::new(32, 2, coords).unwrap();
        let r = low_dim_affinities(&emb, &QKernelParams::sne_symmetric()).unwrap();
        assert!(r.get(0, 31) < 2.0 * PROB_FLOOR);
        assert!(r.get(0, 31) > 0.0);
    }
}
