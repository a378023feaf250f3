//! Reference implementations shared by the integration suites and the
//! acceptance harness. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use qsne::{AffinityMatrix, Method, Normalization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

/// Points per finite-difference instance.
pub const FD_N: usize = 30;
const FD_H: f64 = 1e-5;

/// Pairwise low-dimensional weight, written out per method.
pub fn oracle_weight(method: Method, d2: f64) -> f64 {
    match method {
        Method::Sne | Method::SymmetricSne => (-d2).exp(),
        Method::TSne => 1.0 / (1.0 + d2),
        Method::QSne { q: 1.0 } => (-d2 / 2.0).exp(),
        Method::QSne { q } => (1.0 + (q - 1.0) / (3.0 - q) * d2).powf(-1.0 / (q - 1.0)),
    }
}

/// KL divergence of `p` from the embedding `y` (2-D, row-major), with no
/// probability floor.
pub fn oracle_kl(method: Method, p: &[f64], y: &[f64]) -> f64 {
    let n = y.len() / 2;
    let d2 = |i: usize, j: usize| {
        let dx = y[2 * i] - y[2 * j];
        let dy = y[2 * i + 1] - y[2 * j + 1];
        dx * dx + dy * dy
    };
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i * n + j] = oracle_weight(method, d2(i, j));
            }
        }
    }
    let conditional = matches!(method, Method::Sne);
    let global: f64 = w.iter().sum();
    let mut kl = 0.0;
    for i in 0..n {
        let row: f64 = w[i * n..(i + 1) * n].iter().sum();
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = w[i * n + j] / if conditional { row } else { global };
            let pv = p[i * n + j];
            kl += pv * (pv / r).ln();
        }
    }
    kl
}

/// Dense random affinities: row-stochastic for classic SNE, symmetric joint otherwise.
pub fn random_p(rng: &mut ChaCha8Rng, n: usize, conditional: bool) -> AffinityMatrix<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let v: f64 = rng.random_range(0.05..1.0);
            t[i * n + j] = v;
            t[j * n + i] = if conditional {
                rng.random_range(0.05..1.0)
            } else {
                v
            };
        }
    }
    if conditional {
        for row in t.chunks_mut(n) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        AffinityMatrix::new(n, t, Normalization::Row, false).unwrap()
    } else {
        let s: f64 = t.iter().sum();
        t.iter_mut().for_each(|v| *v /= s);
        AffinityMatrix::new(n, t, Normalization::Global, true).unwrap()
    }
}

/// Methods covered by the finite-difference check.
pub fn fd_methods() -> Vec<Method> {
    let mut m = vec![Method::Sne, Method::SymmetricSne, Method::TSne];
    m.extend([1.1, 1.5, 2.0, 2.5, 2.9].map(|q| Method::QSne { q }));
    m
}

/// Worst absolute deviation of `analytic` from central differences of
/// [`oracle_kl`], relative to the largest difference quotient.
/// `analytic(p, coords)` must return the gradient at `coords`.
pub fn gradient_error(
    method: Method,
    seed: u64,
    analytic: impl Fn(&AffinityMatrix<f64>, &[f64]) -> Vec<f64>,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_p(&mut rng, FD_N, matches!(method, Method::Sne));
    let coords: Vec<f64> = (0..FD_N * 2).map(|_| rng.random_range(-2.0..2.0)).collect();
    let got = analytic(&p, &coords);

    let mut numeric = vec![0.0; FD_N * 2];
    for (k, g) in numeric.iter_mut().enumerate() {
        let mut plus = coords.clone();
        let mut minus = coords.clone();
        plus[k] += FD_H;
        minus[k] -= FD_H;
        *g = (oracle_kl(method, p.probs(), &plus) - oracle_kl(method, p.probs(), &minus))
            / (2.0 * FD_H);
    }
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(scale > 1e-6, "degenerate instance");
    got.iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Integral of `f` over the real line: `x = c + s * sinh(pi/2 sinh t)`,
/// trapezoid in `t`.
pub fn sinh_sinh(f: impl Fn(f64) -> f64, center: f64, scale: f64) -> f64 {
    let h = 1.0 / 128.0;
    let t_max = 5.5;
    let steps = (t_max / h) as i64;
    (-steps..=steps)
        .map(|k| {
            let t = k as f64 * h;
            let inner = FRAC_PI_2 * t.sinh();
            let x = center + scale * inner.sinh();
            let dx = scale * FRAC_PI_2 * t.cosh() * inner.cosh();
            f(x) * dx
        })
        .sum::<f64>()
        * h
}

/// Composite Simpson on `[a, b]`; `intervals` must be even.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let inner: f64 = (1..intervals)
        .map(|k| {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            w * f(a + k as f64 * h)
        })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// Mass of a density with mode `mu`, scale `sigma` and shape `q`; for
/// `q < 1` the support is `mu +- sigma sqrt((3 - q) / (1 - q))`.
pub fn total_mass(pdf: impl Fn(f64) -> f64, mu: f64, sigma: f64, q: f64) -> f64 {
    if q < 1.0 {
        let half_width = sigma * ((3.0 - q) / (1.0 - q)).sqrt();
        simpson(pdf, mu - half_width, mu + half_width, 20_000)
    } else {
        sinh_sinh(pdf, mu, sigma)
    }
}

/// Brute-force leave-one-out vote: sort every other point by
/// (distance, index), count votes in the first k, and on a tie take the
/// class seen first.
pub fn knn_oracle(rows: &[[f64; 2]], labels: &[i64], k: usize) -> f64 {
    let n = rows.len();
    let mut correct = 0;
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = rows[i][0] - rows[j][0];
                let dy = rows[i][1] - rows[j][1];
                (dx * dx + dy * dy, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let near: Vec<i64> = others[..k].iter().map(|&(_, j)| labels[j]).collect();
        let count = |c: i64| near.iter().filter(|&&l| l == c).count();
        let top = near.iter().map(|&c| count(c)).max().unwrap();
        let pred = *near.iter().find(|&&c| count(c) == top).unwrap();
        if pred == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}
