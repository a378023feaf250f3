//! High-dimensional affinities: Gaussian conditionals with per-point
//! bandwidths calibrated to a target perplexity, and their symmetrized joint.

use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::{Scalar, PROB_FLOOR};

/// How an [`AffinityMatrix`] is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Each row is a conditional distribution `p_{j|i}` summing to one.
    Row,
    /// All entries together form one joint distribution.
    Global,
}

/// Dense `N x N` probability table with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix<T> {
    n: usize,
    probs: Vec<T>,
    normalization: Normalization,
    symmetric: bool,
}

impl<T: Scalar> AffinityMatrix<T> {
    /// Wraps a precomputed table, checking the diagonal, normalization and
    /// (if claimed) symmetry.
    pub fn new(
        n: usize,
        probs: Vec<T>,
        normalization: Normalization,
        symmetric: bool,
    ) -> Result<Self> {
        if probs.len() != n * n {
            return Err(Error::invalid(format!(
                "affinity table has {} entries, expected {}",
                probs.len(),
                n * n
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(Error::invalid("affinities must be finite and nonnegative"));
        }
        if (0..n).any(|i| probs[i * n + i] != T::zero()) {
            return Err(Error::invalid("affinity diagonal must be zero"));
        }
        let tol = if std::mem::size_of::<T>() == 4 {
            1e-4
        } else {
            1e-9
        };
        match normalization {
            Normalization::Row => {
                for i in 0..n {
                    let s: f64 = probs[i * n..(i + 1) * n].iter().map(|p| p.f64()).sum();
                    if (s - 1.0).abs() > tol {
                        return Err(Error::invalid(format!("row {i} sums to {s}")));
                    }
                }
            }
            Normalization::Global => {
                let s: f64 = probs.iter().map(|p| p.f64()).sum();
                if (s - 1.0).abs() > tol {
                    return Err(Error::invalid(format!("entries sum to {s}")));
                }
            }
        }
        if symmetric && (0..n).any(|i| (0..i).any(|j| probs[i * n + j] != probs[j * n + i])) {
            return Err(Error::invalid("affinity table is not symmetric"));
        }
        Ok(Self {
            n,
            probs,
            normalization,
            symmetric,
        })
    }

    pub(crate) fn from_raw(
        n: usize,
        probs: Vec<T>,
        normalization: Normalization,
        symmetric: bool,
    ) -> Self {
        Self {
            n,
            probs,
            normalization,
            symmetric,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.probs[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.probs[i * self.n..(i + 1) * self.n]
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Same table with rows and columns reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.n;
        let mut probs = Vec::with_capacity(n * n);
        for &i in order {
            probs.extend(order.iter().map(|&j| self.probs[i * n + j]));
        }
        Self { probs, ..*self }
    }
}

/// Target perplexity and bisection controls for bandwidth calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerplexityConfig {
    pub perplexity: f64,
    /// Allowed gap between a row's entropy and `ln(perplexity)`, in nats.
    pub entropy_tolerance: f64,
    pub max_bisection_steps: usize,
}

impl PerplexityConfig {
    pub fn new(perplexity: f64) -> Self {
        Self {
            perplexity,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.perplexity > 1.0 && self.perplexity < n as f64) {
            return Err(Error::invalid(format!(
                "perplexity {} must lie in (1, {n})",
                self.perplexity
            )));
        }
        if !(self.entropy_tolerance > 0.0) || self.max_bisection_steps == 0 {
            return Err(Error::invalid(
                "entropy tolerance and bisection steps must be positive",
            ));
        }
        Ok(())
    }
}

impl Default for PerplexityConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            entropy_tolerance: 1e-5,
            max_bisection_steps: 50,
        }
    }
}

/// Per-point Gaussian bandwidths `sigma_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthVector<T> {
    sigmas: Vec<T>,
}

impl<T: Scalar> BandwidthVector<T> {
    pub fn new(sigmas: Vec<T>) -> Result<Self> {
        if sigmas.iter().any(|s| !(s.is_finite() && *s > T::zero())) {
            return Err(Error::invalid("bandwidths must be positive and finite"));
        }
        Ok(Self { sigmas })
    }

    pub fn uniform(n: usize, sigma: T) -> Result<Self> {
        Self::new(vec![sigma; n])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }
}

/// Result of [`calibrate_bandwidths`].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T> {
    pub sigmas: BandwidthVector<T>,
    /// Rows whose entropy missed the tolerance; their best-so-far bandwidth is kept.
    pub unconverged: Vec<usize>,
}

/// Unnormalized Gaussian weights of one row, shifted by the nearest distance
/// and floored. Writes into `out` and returns their sum.
fn gaussian_row<T: Scalar>(dist: &[T], i: usize, sigma: T, out: &mut [T]) -> T {
    let floor = T::c(PROB_FLOOR);
    let nearest = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(T::infinity(), T::min);
    let scale = T::one() / (T::c(2.0) * sigma * sigma);
    let mut sum = T::zero();
    for (j, (o, &d)) in out.iter_mut().zip(dist).enumerate() {
        if j == i {
            *o = T::zero();
            continue;
        }
        let w = (-(d - nearest) * scale).exp().max(floor);
        *o = w;
        sum += w;
    }
    sum
}

/// Entropy of the normalized row, using `ln w` from the exponent instead of
/// taking logs of every entry.
fn gaussian_row_entropy<T: Scalar>(dist: &[T], i: usize, sigma: T, scratch: &mut [T]) -> T {
    let sum = gaussian_row(dist, i, sigma, scratch);
    let floor = T::c(PROB_FLOOR);
    let ln_floor = floor.ln();
    let nearest = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(T::infinity(), T::min);
    let scale = T::one() / (T::c(2.0) * sigma * sigma);
    let mut weighted = T::zero();
    for (j, (&w, &d)) in scratch.iter().zip(dist).enumerate() {
        if j == i {
            continue;
        }
        let ln_w = if w > floor {
            -(d - nearest) * scale
        } else {
            ln_floor
        };
        weighted += w * ln_w;
    }
    sum.ln() - weighted / sum
}

/// Row-normalized Gaussian conditionals `p_{j|i}` for the given bandwidths.
pub fn conditional_affinities<T: Scalar>(
    data: &DataMatrix<T>,
    sigmas: &BandwidthVector<T>,
) -> Result<AffinityMatrix<T>> {
    let n = data.n_samples();
    if sigmas.len() != n {
        return Err(Error::invalid(format!(
            "{} bandwidths for {n} samples",
            sigmas.len()
        )));
    }
    let dist = finite_distances(data)?;
    let mut probs = vec![T::zero(); n * n];
    probs
        .par_chunks_mut(n)
        .zip(sigmas.as_slice().par_iter())
        .enumerate()
        .for_each(|(i, (row, &sigma))| {
            let sum = gaussian_row(&dist[i * n..(i + 1) * n], i, sigma, row);
            let inv = T::one() / sum;
            row.iter_mut().for_each(|p| *p *= inv);
        });
    Ok(AffinityMatrix::from_raw(
        n,
        probs,
        Normalization::Row,
        false,
    ))
}

fn finite_distances<T: Scalar>(data: &DataMatrix<T>) -> Result<Vec<T>> {
    let dist = data.squared_distances();
    if dist.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid(
            "pairwise distances overflow or are non-finite",
        ));
    }
    Ok(dist)
}

/// Shannon entropy (nats) of row `row`, skipping the diagonal and zero entries.
pub fn row_entropy<T: Scalar>(affinities: &AffinityMatrix<T>, row: usize) -> T {
    affinities
        .row(row)
        .iter()
        .enumerate()
        .filter(|&(j, &p)| j != row && p > T::zero())
        .map(|(_, &p)| -p * p.ln())
        .fold(T::zero(), |acc, v| acc + v)
}

/// Finds `sigma_i` per point so each conditional row has entropy `ln(perplexity)`.
///
/// Starts at `sigma = 1`, doubles or halves until the target is bracketed,
/// then bisects. Rows that do not reach `entropy_tolerance` within
/// `max_bisection_steps` keep their best bandwidth and are listed in
/// [`Calibration::unconverged`].
pub fn calibrate_bandwidths<T: Scalar>(
    data: &DataMatrix<T>,
    config: &PerplexityConfig,
) -> Result<Calibration<T>> {
    let n = data.n_samples();
    config.validate(n)?;
    let dist = finite_distances(data)?;
    if dist.iter().all(|&d| d == T::zero()) {
        return Err(Error::DegenerateData(
            "all samples are identical; bandwidths are undefined".into(),
        ));
    }
    let target = T::c(config.perplexity.ln());
    let tol = T::c(config.entropy_tolerance);

    let rows: Vec<(T, bool)> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![T::zero(); n],
            |scratch, i| {
                calibrate_row(
                    &dist[i * n..(i + 1) * n],
                    i,
                    target,
                    tol,
                    config.max_bisection_steps,
                    scratch,
                )
            },
        )
        .collect();

    let unconverged = rows
        .iter()
        .enumerate()
        .filter(|(_, (_, ok))| !ok)
        .map(|(i, _)| i)
        .collect();
    let sigmas = BandwidthVector::new(rows.into_iter().map(|(s, _)| s).collect())?;
    Ok(Calibration {
        sigmas,
        unconverged,
    })
}

// Bracket expansion runs over at most this many doublings or halvings.
const MAX_BRACKET_STEPS: usize = 200;

fn calibrate_row<T: Scalar>(
    dist: &[T],
    i: usize,
    target: T,
    tol: T,
    max_steps: usize,
    scratch: &mut [T],
) -> (T, bool) {
    let two = T::c(2.0);
    let mut best = (T::one(), T::infinity());
    let mut eval = |sigma: T, best: &mut (T, T)| {
        let gap = gaussian_row_entropy(dist, i, sigma, scratch) - target;
        if gap.abs() < best.1 {
            *best = (sigma, gap.abs());
        }
        gap
    };

    let mut sigma = T::one();
    let gap = eval(sigma, &mut best);
    if gap.abs() <= tol {
        return (sigma, true);
    }
    // entropy grows with sigma
    let (mut lo, mut hi);
    if gap < T::zero() {
        lo = sigma;
        hi = T::infinity();
        for _ in 0..MAX_BRACKET_STEPS {
            sigma *= two;
            if !sigma.is_finite() {
                break;
            }
            let g = eval(sigma, &mut best);
            if g.abs() <= tol {
                return (sigma, true);
            }
            if g > T::zero() {
                hi = sigma;
                break;
            }
            lo = sigma;
        }
    } else {
        hi = sigma;
        lo = T::zero();
        for _ in 0..MAX_BRACKET_STEPS {
            sigma /= two;
            if sigma <= T::min_positive_value() {
                break;
            }
            let g = eval(sigma, &mut best);
            if g.abs() <= tol {
                return (sigma, true);
            }
            if g < T::zero() {
                lo = sigma;
                break;
            }
            hi = sigma;
        }
    }
    if !(hi.is_finite() && lo > T::zero()) {
        return (best.0, false);
    }

    for _ in 0..max_steps {
        let mid = (lo + hi) / two;
        let g = eval(mid, &mut best);
        if g.abs() <= tol {
            return (mid, true);
        }
        if g < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (best.0, best.1 <= tol)
}

/// Symmetric joint `p_ij = (p_{j|i} + p_{i|j}) / 2N`, floored and renormalized.
pub fn symmetrize<T: Scalar>(conditional: &AffinityMatrix<T>) -> Result<AffinityMatrix<T>> {
    if conditional.normalization() != Normalization::Row {
        return Err(Error::invalid(
            "symmetrize expects row-normalized conditionals",
        ));
    }
    let n = conditional.n();
    let floor = T::c(PROB_FLOOR);
    let denom = T::c(2.0 * n as f64);
    let mut probs = vec![T::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let p = ((conditional.get(i, j) + conditional.get(j, i)) / denom).max(floor);
            probs[i * n + j] = p;
            probs[j * n + i] = p;
        }
    }
    normalize_global(&mut probs);
    Ok(AffinityMatrix::from_raw(
        n,
        probs,
        Normalization::Global,
        true,
    ))
}

/// Divides by the row-ordered sum. Symmetric input stays exactly symmetric.
pub(crate) fn normalize_global<T: Scalar>(probs: &mut [T]) {
    let total = probs.iter().fold(T::zero(), |acc, &p| acc + p);
    let inv = T::one() / total;
    probs.iter_mut().for_each(|p| *p *= inv);
}
