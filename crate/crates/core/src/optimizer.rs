//! KL-divergence minimization by momentum gradient descent with early
//! exaggeration, shared by all four methods.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::affinity::{
    calibrate_bandwidths, conditional_affinities, symmetrize, AffinityMatrix, Normalization,
    PerplexityConfig,
};
use crate::data::{squared_distances_into, DataMatrix, Embedding};
use crate::error::{Error, Result};
use crate::joint::JointState;
use crate::qkernel::{fill_low_dim, KernelFamily, PairKernel, QKernelParams};
use crate::Scalar;

/// Embedding method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Conditional SNE with a Gaussian embedding kernel.
    Sne,
    /// Symmetric SNE with a Gaussian embedding kernel.
    SymmetricSne,
    /// t-SNE; identical to `QSne { q: 2.0 }`.
    TSne,
    QSne {
        q: f64,
    },
}

impl Method {
    pub fn kernel(&self) -> Result<QKernelParams> {
        match *self {
            Method::Sne => Ok(QKernelParams::sne_conditional()),
            Method::SymmetricSne => Ok(QKernelParams::sne_symmetric()),
            Method::TSne => Ok(QKernelParams::tsne()),
            Method::QSne { q } => QKernelParams::qgaussian(q),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sne => "sne",
            Method::SymmetricSne => "ssne",
            Method::TSne => "tsne",
            Method::QSne { .. } => "qsne",
        }
    }

    /// Kernel parameter `q` (1 for the Gaussian methods, 2 for t-SNE).
    pub fn q(&self) -> f64 {
        match *self {
            Method::Sne | Method::SymmetricSne => 1.0,
            Method::TSne => 2.0,
            Method::QSne { q } => q,
        }
    }
}

/// Optimizer schedule. Defaults: 1000 iterations, learning rate 200,
/// momentum 0.5 switching to 0.8 at iteration 250, and affinities
/// exaggerated 12x for the first 250 iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    /// First iteration (0-based) that uses `momentum_late`.
    pub momentum_switch_iter: usize,
    pub exaggeration_factor: f64,
    /// Number of leading iterations run on exaggerated affinities.
    pub exaggeration_iters: usize,
    /// Standard deviation of the Gaussian initial coordinates.
    pub init_scale: f64,
    pub seed: u64,
    /// Embedding dimension.
    pub dims: usize,
    pub method: Method,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            learning_rate: 200.0,
            momentum_early: 0.5,
            momentum_late: 0.8,
            momentum_switch_iter: 250,
            exaggeration_factor: 12.0,
            exaggeration_iters: 250,
            init_scale: 1e-4,
            seed: 0,
            dims: 2,
            method: Method::QSne { q: 2.0 },
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.method.kernel()?;
        let unit = 0.0..1.0;
        if self.iterations == 0 || self.dims == 0 {
            return Err(Error::invalid("iterations and dims must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !unit.contains(&self.momentum_early) || !unit.contains(&self.momentum_late) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.momentum_switch_iter > self.iterations || self.exaggeration_iters > self.iterations
        {
            return Err(Error::invalid(
                "momentum switch and exaggeration length cannot exceed the iteration count",
            ));
        }
        if !(self.exaggeration_factor > 0.0 && self.init_scale > 0.0) {
            return Err(Error::invalid(
                "exaggeration factor and init scale must be positive",
            ));
        }
        Ok(())
    }

    fn momentum(&self, iteration: usize) -> f64 {
        if iteration < self.momentum_switch_iter {
            self.momentum_early
        } else {
            self.momentum_late
        }
    }
}

/// Per-iteration record of an optimization run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace<T> {
    /// `kl_per_iteration[t]` is the divergence (against the unexaggerated
    /// affinities) of the embedding after update `t + 1`.
    pub kl_per_iteration: Vec<T>,
    /// Euclidean norm of the full gradient used in update `t + 1`.
    pub gradient_norms: Vec<T>,
    /// Rows whose bandwidth calibration missed the entropy tolerance.
    pub unconverged_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedRun<T> {
    pub embedding: Embedding<T>,
    pub trace: TrainingTrace<T>,
}

/// `sum_i sum_{j != i} p_ij ln(p_ij / r_ij)`; zero-`p` terms contribute nothing.
pub fn kl_divergence<T: Scalar>(p: &AffinityMatrix<T>, r: &AffinityMatrix<T>) -> Result<T> {
    if p.n() != r.n() {
        return Err(Error::invalid(format!(
            "affinity sizes differ: {} vs {}",
            p.n(),
            r.n()
        )));
    }
    if p.normalization() != r.normalization() {
        return Err(Error::invalid(
            "cannot compare row-normalized with globally normalized affinities",
        ));
    }
    Ok(kl_raw(p.probs(), r.probs()))
}

fn kl_raw<T: Scalar>(p: &[T], r: &[T]) -> T {
    p.iter()
        .zip(r)
        .filter(|(&pv, _)| pv > T::zero())
        .map(|(&pv, &rv)| pv * (pv / rv).ln())
        .fold(T::zero(), |acc, v| acc + v)
}

/// `sum p ln r` over entries with positive `p`.
fn cross_term<T: Scalar>(p: &[T], r: &[T]) -> T {
    p.iter()
        .zip(r)
        .filter(|(&pv, _)| pv > T::zero())
        .fold(T::zero(), |acc, (&pv, &rv)| acc + pv * rv.ln())
}

/// `sum p ln p` over positive entries; the constant part of the KL trace.
fn entropy_term<T: Scalar>(p: &[T]) -> T {
    p.iter()
        .filter(|&&v| v > T::zero())
        .fold(T::zero(), |acc, &v| acc + v * v.ln())
}

/// Analytic gradient of the KL divergence with respect to every embedded
/// point, as an `N x d` row-major matrix.
pub fn gradient<T: Scalar>(
    p: &AffinityMatrix<T>,
    r: &AffinityMatrix<T>,
    embedding: &Embedding<T>,
    kernel: &QKernelParams,
) -> Result<Vec<T>> {
    let n = embedding.n_points();
    if p.n() != n || r.n() != n {
        return Err(Error::invalid("affinities and embedding disagree on N"));
    }
    if p.normalization() != kernel.normalization() || r.normalization() != kernel.normalization() {
        return Err(Error::invalid(
            "affinity normalization does not match the kernel",
        ));
    }
    if kernel.family() == KernelFamily::QGaussian && !(1.0..3.0).contains(&kernel.q()) {
        return Err(Error::domain(format!("q = {} outside [1, 3)", kernel.q())));
    }
    let dist = embedding.squared_distances();
    let mut out = vec![T::zero(); n * embedding.dim()];
    gradient_into(
        p.probs(),
        T::one(),
        r.probs(),
        embedding.coords(),
        n,
        &dist,
        kernel,
        &mut out,
    );
    Ok(out)
}

/// Constant factor in front of each family's gradient sum.
fn gradient_scale(kernel: &QKernelParams) -> f64 {
    match kernel.family() {
        KernelFamily::SneConditional => 2.0,
        KernelFamily::SneSymmetric => 4.0,
        KernelFamily::QGaussian => 4.0 / (3.0 - kernel.q()),
    }
}

/// Gradient with `p` scaled by `p_scale` (early exaggeration) without
/// touching the stored affinities.
fn gradient_into<T: Scalar>(
    p: &[T],
    p_scale: T,
    r: &[T],
    y: &[T],
    n: usize,
    dist: &[T],
    kernel: &QKernelParams,
    out: &mut [T],
) {
    let d = y.len() / n;
    let pair = PairKernel::<T>::new(kernel);
    let scale = T::c(gradient_scale(kernel));
    let conditional = kernel.family() == KernelFamily::SneConditional;

    out.par_chunks_mut(d).enumerate().for_each(|(i, g)| {
        g.iter_mut().for_each(|v| *v = T::zero());
        let yi = &y[i * d..(i + 1) * d];
        for j in 0..n {
            if j == i {
                continue;
            }
            let coeff = if conditional {
                p_scale * (p[i * n + j] + p[j * n + i]) - (r[i * n + j] + r[j * n + i])
            } else {
                (p_scale * p[i * n + j] - r[i * n + j]) * pair.gradient_factor(dist[i * n + j])
            };
            let yj = &y[j * d..(j + 1) * d];
            for ((gk, &a), &b) in g.iter_mut().zip(yi).zip(yj) {
                *gk += coeff * (a - b);
            }
        }
        g.iter_mut().for_each(|v| *v *= scale);
    });
}

/// One momentum update: `y_next = y - eta * grad + alpha * (y - y_prev)`.
pub fn step<T: Scalar>(
    current: &Embedding<T>,
    previous: &Embedding<T>,
    gradient: &[T],
    learning_rate: T,
    momentum: T,
) -> Result<Embedding<T>> {
    if current.n_points() != previous.n_points()
        || current.dim() != previous.dim()
        || gradient.len() != current.coords().len()
    {
        return Err(Error::invalid("step operands have different shapes"));
    }
    let mut coords = vec![T::zero(); gradient.len()];
    momentum_update(
        current.coords(),
        previous.coords(),
        gradient,
        learning_rate,
        momentum,
        &mut coords,
    );
    Ok(Embedding::from_raw(
        current.n_points(),
        current.dim(),
        coords,
    ))
}

fn momentum_update<T: Scalar>(
    current: &[T],
    previous: &[T],
    gradient: &[T],
    learning_rate: T,
    momentum: T,
    out: &mut [T],
) {
    for (((o, &y), &prev), &g) in out.iter_mut().zip(current).zip(previous).zip(gradient) {
        *o = y - learning_rate * g + momentum * (y - prev);
    }
}

/// Seeded Gaussian initial coordinates with standard deviation `init_scale`.
pub fn initial_embedding<T: Scalar>(n: usize, config: &OptimizerConfig) -> Result<Embedding<T>> {
    let normal = Normal::new(0.0, config.init_scale)
        .map_err(|e| Error::invalid(format!("init scale: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let coords = (0..n * config.dims)
        .map(|_| T::c(normal.sample(&mut rng)))
        .collect();
    Ok(Embedding::from_raw(n, config.dims, coords))
}

/// High-dimensional affinities used by `method`: row conditionals for classic
/// SNE, symmetrized joint otherwise. Also returns the unconverged calibration rows.
pub fn input_affinities<T: Scalar>(
    data: &DataMatrix<T>,
    perplexity: &PerplexityConfig,
    method: Method,
) -> Result<(AffinityMatrix<T>, Vec<usize>)> {
    let calibration = calibrate_bandwidths(data, perplexity)?;
    let conditional = conditional_affinities(data, &calibration.sigmas)?;
    let p = match method {
        Method::Sne => conditional,
        _ => symmetrize(&conditional)?,
    };
    Ok((p, calibration.unconverged))
}

/// Calibrates, builds affinities, and optimizes from a seeded random start.
pub fn embed<T: Scalar>(
    data: &DataMatrix<T>,
    perplexity: &PerplexityConfig,
    config: &OptimizerConfig,
) -> Result<EmbedRun<T>> {
    config.validate()?;
    let (p, unconverged) = input_affinities(data, perplexity, config.method)?;
    let init = initial_embedding(data.n_samples(), config)?;
    let mut run = optimize(&p, init, config)?;
    run.trace.unconverged_rows = unconverged;
    Ok(run)
}

/// Low-dimensional affinities tracked across iterations.
enum LowDimState<T> {
    /// Row-normalized kernels keep full distance and probability tables.
    Dense {
        kernel: QKernelParams,
        n: usize,
        dist: Vec<T>,
        r: Vec<T>,
    },
    Joint {
        state: JointState<T>,
        scale: T,
    },
}

impl<T: Scalar> LowDimState<T> {
    fn new(kernel: &QKernelParams, p: &[T], n: usize, dims: usize) -> Self {
        match kernel.normalization() {
            Normalization::Row => Self::Dense {
                kernel: *kernel,
                n,
                dist: vec![T::zero(); n * n],
                r: vec![T::zero(); n * n],
            },
            Normalization::Global => Self::Joint {
                state: JointState::new(PairKernel::new(kernel), p, n, dims),
                scale: T::c(gradient_scale(kernel)),
            },
        }
    }

    /// Moves to coordinates `y`; returns `sum p ln r`.
    fn refresh(&mut self, y: &[T], p: &[T]) -> T {
        match self {
            Self::Dense { kernel, n, dist, r } => {
                squared_distances_into(y, *n, y.len() / *n, dist);
                fill_low_dim(dist, *n, kernel, r);
                cross_term(p, r)
            }
            Self::Joint { state, .. } => state.refresh(y, p),
        }
    }

    fn gradient(&self, y: &[T], p: &[T], p_scale: T, out: &mut [T]) {
        match self {
            Self::Dense { kernel, n, dist, r } => {
                gradient_into(p, p_scale, r, y, *n, dist, kernel, out)
            }
            Self::Joint { state, scale } => state.gradient(y, p, p_scale, *scale, out),
        }
    }
}

/// Runs the gradient descent schedule from a given starting embedding.
pub fn optimize<T: Scalar>(
    p: &AffinityMatrix<T>,
    init: Embedding<T>,
    config: &OptimizerConfig,
) -> Result<EmbedRun<T>> {
    config.validate()?;
    let kernel = config.method.kernel()?;
    let n = init.n_points();
    if p.n() != n {
        return Err(Error::invalid(format!(
            "{} affinity rows for {n} embedded points",
            p.n()
        )));
    }
    if p.normalization() != kernel.normalization() {
        return Err(Error::invalid(format!(
            "method {} needs {:?}-normalized affinities",
            config.method.name(),
            kernel.normalization()
        )));
    }
    if !init.is_finite() {
        return Err(Error::invalid("initial embedding is not finite"));
    }

    let eta = T::c(config.learning_rate);
    let exaggeration = T::c(config.exaggeration_factor);
    let dims = init.dim();
    let mut current = init.coords().to_vec();
    let mut previous = current.clone();
    let mut next = vec![T::zero(); current.len()];
    let mut grad = vec![T::zero(); current.len()];
    let mut state = LowDimState::new(&kernel, p.probs(), n, dims);
    state.refresh(&current, p.probs());
    let p_log_p = entropy_term(p.probs());
    let mut trace = TrainingTrace {
        kl_per_iteration: Vec::with_capacity(config.iterations),
        gradient_norms: Vec::with_capacity(config.iterations),
        unconverged_rows: Vec::new(),
    };

    for t in 0..config.iterations {
        let p_scale = if t < config.exaggeration_iters {
            exaggeration
        } else {
            T::one()
        };
        state.gradient(&current, p.probs(), p_scale, &mut grad);
        let norm = grad.iter().fold(T::zero(), |acc, &g| acc + g * g).sqrt();
        trace.gradient_norms.push(norm);

        let alpha = T::c(config.momentum(t));
        momentum_update(&current, &previous, &grad, eta, alpha, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: t + 1,
                detail: format!("non-finite coordinates (gradient norm {norm})"),
            });
        }
        // previous <- current <- next
        std::mem::swap(&mut previous, &mut current);
        std::mem::swap(&mut current, &mut next);

        let kl = p_log_p - state.refresh(&current, p.probs());
        if !kl.is_finite() {
            return Err(Error::Divergence {
                iteration: t + 1,
                detail: format!("KL divergence is {kl}"),
            });
        }
        trace.kl_per_iteration.push(kl);
    }

    Ok(EmbedRun {
        embedding: Embedding::from_raw(n, dims, current),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{BandwidthVector, Normalization};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_data(n: usize, d: usize, seed: u64) -> DataMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        DataMatrix::new(n, d, values, None).unwrap()
    }

    fn random_embedding(n: usize, seed: u64) -> Embedding<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..n * 2).map(|_| rng.random_range(-1.5..1.5)).collect();
        Embedding::new(n, 2, coords).unwrap()
    }

    fn joint_p(n: usize, seed: u64) -> AffinityMatrix<f64> {
        let data = random_data(n, 5, seed);
        let cond =
            conditional_affinities(&data, &BandwidthVector::uniform(n, 1.0).unwrap()).unwrap();
        symmetrize(&cond).unwrap()
    }

    #[test]
    fn kl_of_identical_tables_is_zero() {
        let p = joint_p(10, 1);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_direct_summation_example() {
        // uniform over the 6 ordered pairs of 3 points vs. one pair halved
        let u: f64 = 1.0 / 6.0;
        let p = AffinityMatrix::new(
            3,
            vec![0.0, u, u, u, 0.0, u, u, u, 0.0],
            Normalization::Global,
            true,
        )
        .unwrap();
        let z: f64 = 5.5 / 6.0;
        let (lo, hi) = (u / 2.0 / z, u / z);
        let r = AffinityMatrix::new(
            3,
            vec![0.0, lo, hi, hi, 0.0, hi, hi, hi, 0.0],
            Normalization::Global,
            false,
        )
        .unwrap();
        let direct = u * (u / lo).ln() + 5.0 * u * (u / hi).ln();
        let kl = kl_divergence(&p, &r).unwrap();
        assert_relative_eq!(kl, direct, epsilon = 1e-15);
        // (ln 2 + 5 ln(11/12) ... ) written out: (1/6) ln(11/6) + (5/6) ln(11/12)
        assert_relative_eq!(
            kl,
            (11f64 / 6.0).ln() / 6.0 + 5.0 * (11f64 / 12.0).ln() / 6.0,
            epsilon = 1e-15
        );
        assert!(kl > 0.0);
    }

    #[test]
    fn kl_rejects_mismatched_tables() {
        let p = joint_p(5, 2);
        let r = joint_p(6, 2);
        assert!(kl_divergence(&p, &r).is_err());
        let data = random_data(5, 2, 2);
        let cond =
            conditional_affinities(&data, &BandwidthVector::uniform(5, 1.0).unwrap()).unwrap();
        assert!(kl_divergence(&p, &cond).is_err());
    }

    #[test]
    fn gradient_vanishes_when_p_equals_r() {
        let emb = random_embedding(12, 3);
        for kernel in [
            QKernelParams::sne_conditional(),
            QKernelParams::sne_symmetric(),
            QKernelParams::qgaussian(1.4).unwrap(),
            QKernelParams::tsne(),
        ] {
            let r = crate::low_dim_affinities(&emb, &kernel).unwrap();
            let g = gradient(&r, &r, &emb, &kernel).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn step_examples() {
        let y = Embedding::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let prev = Embedding::new(2, 2, vec![0.0, 2.0, 3.0, 5.0]).unwrap();
        let g = vec![0.5, -1.0, 0.0, 2.0];
        assert_eq!(
            step(&y, &prev, &g, 0.1, 0.0).unwrap().coords(),
            &[0.95, 2.1, 3.0, 3.8]
        );
        assert_eq!(
            step(&y, &prev, &[0.0; 4], 0.1, 0.5).unwrap().coords(),
            &[1.5, 2.0, 3.0, 3.5]
        );
        assert_eq!(step(&y, &prev, &g, 0.0, 0.0).unwrap(), y);
        assert!(step(&y, &prev, &g[..2], 0.1, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = OptimizerConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            OptimizerConfig {
                momentum_switch_iter: 1001,
                ..ok
            },
            OptimizerConfig {
                exaggeration_iters: 2000,
                ..ok
            },
            OptimizerConfig {
                momentum_late: 1.0,
                ..ok
            },
            OptimizerConfig {
                learning_rate: 0.0,
                ..ok
            },
            OptimizerConfig {
                method: Method::QSne { q: 3.0 },
                ..ok
            },
            OptimizerConfig {
                method: Method::QSne { q: 0.5 },
                ..ok
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn two_points_have_zero_kl() {
        let data =
            DataMatrix::from_rows(&[vec![0.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]], None).unwrap();
        let cfg = OptimizerConfig {
            method: Method::TSne,
            ..OptimizerConfig::default()
        };
        let perplexity = PerplexityConfig {
            perplexity: 1.5,
            ..PerplexityConfig::default()
        };
        // perplexity must be below N = 2
        let run = embed(&data, &perplexity, &cfg).unwrap();
        assert_eq!(run.trace.kl_per_iteration.len(), 1000);
        assert!(*run.trace.kl_per_iteration.last().unwrap() < 1e-3);
    }

    #[test]
    fn exaggerated_phase_leaves_p_untouched() {
        let p = joint_p(15, 4);
        let before = p.clone();
        let cfg = OptimizerConfig {
            iterations: 30,
            momentum_switch_iter: 10,
            exaggeration_iters: 10,
            ..OptimizerConfig::default()
        };
        let init = initial_embedding::<f64>(15, &cfg).unwrap();
        optimize(&p, init, &cfg).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn post_exaggeration_gradient_uses_original_p() {
        // the exaggerated run, once past the exaggeration phase, must follow the
        // same update rule as a run that never exaggerated
        let p = joint_p(12, 8);
        let cfg = OptimizerConfig {
            iterations: 3,
            momentum_switch_iter: 0,
            exaggeration_iters: 0,
            momentum_late: 0.0,
            ..OptimizerConfig::default()
        };
        let init = random_embedding(12, 5);
        let kernel = cfg.method.kernel().unwrap();
        let r = crate::low_dim_affinities(&init, &kernel).unwrap();
        let g = gradient(&p, &r, &init, &kernel).unwrap();
        let one = optimize(
            &p,
            init.clone(),
            &OptimizerConfig {
                iterations: 1,
                ..cfg
            },
        )
        .unwrap();
        let manual = step(&init, &init, &g, 200.0, 0.0).unwrap();
        assert_close(one.embedding.coords(), manual.coords(), 1e-12);
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol * scale, "{x} vs {y}");
        }
    }

    fn random_table(n: usize, seed: u64, normalization: Normalization) -> AffinityMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.01..1.0)).collect();
        for i in 0..n {
            t[i * n + i] = 0.0;
        }
        match normalization {
            Normalization::Row => {
                for row in t.chunks_mut(n) {
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= s);
                }
            }
            Normalization::Global => {
                let s: f64 = t.iter().sum();
                t.iter_mut().for_each(|v| *v /= s);
            }
        }
        AffinityMatrix::new(n, t, normalization, false).unwrap()
    }

    #[test]
    fn optimizer_loop_agrees_with_reference_functions() {
        // one exaggerated step per method, with symmetric and asymmetric p
        for method in [
            Method::Sne,
            Method::SymmetricSne,
            Method::TSne,
            Method::QSne { q: 1.0 },
            Method::QSne { q: 1.3 },
            Method::QSne { q: 2.7 },
        ] {
            let kernel = method.kernel().unwrap();
            let tables = match kernel.normalization() {
                Normalization::Row => vec![random_table(14, 1, Normalization::Row)],
                Normalization::Global => {
                    vec![joint_p(14, 2), random_table(14, 3, Normalization::Global)]
                }
            };
            for p in tables {
                let cfg = OptimizerConfig {
                    iterations: 1,
                    exaggeration_iters: 1,
                    exaggeration_factor: 3.0,
                    momentum_switch_iter: 0,
                    learning_rate: 5.0,
                    method,
                    ..OptimizerConfig::default()
                };
                let init = random_embedding(14, 7);
                let scaled = AffinityMatrix::from_raw(
                    14,
                    p.probs().iter().map(|v| v * 3.0).collect(),
                    p.normalization(),
                    false,
                );
                let r = crate::low_dim_affinities(&init, &kernel).unwrap();
                let g = gradient(&scaled, &r, &init, &kernel).unwrap();
                let run = optimize(&p, init.clone(), &cfg).unwrap();
                let manual = step(&init, &init, &g, 5.0, 0.0).unwrap();
                assert_close(run.embedding.coords(), manual.coords(), 1e-12);

                let r_after = crate::low_dim_affinities(&run.embedding, &kernel).unwrap();
                let kl = kl_divergence(&p, &r_after).unwrap();
                assert!((run.trace.kl_per_iteration[0] - kl).abs() < 1e-12 * kl.max(1.0));
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((run.trace.gradient_norms[0] - norm).abs() < 1e-12 * norm);
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let p = joint_p(10, 6);
        let cfg = OptimizerConfig {
            iterations: 200,
            learning_rate: 1e300,
            momentum_switch_iter: 0,
            exaggeration_iters: 0,
            method: Method::SymmetricSne,
            ..OptimizerConfig::default()
        };
        let init = random_embedding(10, 1);
        assert!(matches!(
            optimize(&p, init, &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn f32_run_is_finite() {
        let data = random_data(40, 4, 9);
        let values = data.values().iter().map(|&v| v as f32).collect();
        let data = DataMatrix::<f32>::new(40, 4, values, None).unwrap();
        let cfg = OptimizerConfig {
            iterations: 100,
            momentum_switch_iter: 50,
            exaggeration_iters: 50,
            exaggeration_factor: 4.0,
            learning_rate: 4.0,
            method: Method::QSne { q: 1.5 },
            ..OptimizerConfig::default()
        };
        let perplexity = PerplexityConfig {
            entropy_tolerance: 1e-3,
            ..PerplexityConfig::new(8.0)
        };
        let run = embed(&data, &perplexity, &cfg).unwrap();
        assert!(run.embedding.is_finite());
        let kl = &run.trace.kl_per_iteration;
        assert!(kl.last().unwrap() < &kl[0]);
    }
}
