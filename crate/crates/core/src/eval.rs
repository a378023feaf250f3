//! Embedding quality: leave-one-out k-NN accuracy and co-ranking based
//! `Q_NX` / `Q_local`.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::data::{DataMatrix, Embedding};
use crate::error::{Error, Result};
use crate::Scalar;

/// Neighbors of `i` ordered by distance, equal distances by smaller index.
fn neighbor_order<T: Scalar>(dist_row: &[T], i: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist_row.len()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| {
        dist_row[a]
            .partial_cmp(&dist_row[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Leave-one-out k-NN accuracy in the embedding.
///
/// Each point is classified by majority vote of its `k` nearest other
/// points. Among classes tied on votes, the class of the nearest neighbor
/// wins.
pub fn knn_accuracy<T: Scalar>(embedding: &Embedding<T>, labels: &[i64], k: usize) -> Result<f64> {
    let n = embedding.n_points();
    if labels.len() != n {
        return Err(Error::invalid(format!(
            "{} labels for {n} points",
            labels.len()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..{n}")));
    }
    let dist = embedding.squared_distances();
    let correct = (0..n)
        .into_par_iter()
        .filter(|&i| {
            let order = neighbor_order(&dist[i * n..(i + 1) * n], i);
            predict(&order[..k], labels) == labels[i]
        })
        .count();
    Ok(correct as f64 / n as f64)
}

/// Majority label of `neighbors` (nearest first); ties go to the class seen first.
fn predict(neighbors: &[usize], labels: &[i64]) -> i64 {
    let mut votes: HashMap<i64, usize> = HashMap::new();
    for &j in neighbors {
        *votes.entry(labels[j]).or_default() += 1;
    }
    let top = votes.values().copied().max().unwrap_or(0);
    neighbors
        .iter()
        .map(|&j| labels[j])
        .find(|l| votes[l] == top)
        .expect("at least one neighbor")
}

/// Joint histogram of neighbor ranks: `count(k, l)` is the number of ordered
/// pairs `(i, j)` where `j` is the `k`-th neighbor of `i` in the input space
/// and the `l`-th in the embedding (ranks `1..=N-1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorankingMatrix {
    n: usize,
    counts: Vec<u32>,
}

impl CorankingMatrix {
    /// Number of points `N`; the table is `(N-1) x (N-1)`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Count for 1-based ranks `high` and `low`.
    pub fn count(&self, high: usize, low: usize) -> u32 {
        let m = self.n - 1;
        self.counts[(high - 1) * m + (low - 1)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Rank of every `j` in `i`'s neighbor list, 1-based; rank of `i` itself is 0.
fn rank_table<T: Scalar>(dist: &[T], n: usize) -> Vec<u32> {
    let mut ranks = vec![0u32; n * n];
    ranks.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (r, j) in neighbor_order(&dist[i * n..(i + 1) * n], i)
            .into_iter()
            .enumerate()
        {
            row[j] = r as u32 + 1;
        }
    });
    ranks
}

pub fn coranking<T: Scalar>(high: &DataMatrix<T>, low: &Embedding<T>) -> Result<CorankingMatrix> {
    let n = high.n_samples();
    if low.n_points() != n {
        return Err(Error::invalid(format!(
            "{n} input samples but {} embedded points",
            low.n_points()
        )));
    }
    if n < 3 {
        return Err(Error::invalid("co-ranking needs at least 3 points"));
    }
    let high_ranks = rank_table(&high.squared_distances(), n);
    let low_ranks = rank_table(&low.squared_distances(), n);
    let m = n - 1;
    let mut counts = vec![0u32; m * m];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (a, b) = (
                    high_ranks[i * n + j] as usize,
                    low_ranks[i * n + j] as usize,
                );
                counts[(a - 1) * m + (b - 1)] += 1;
            }
        }
    }
    Ok(CorankingMatrix { n, counts })
}

/// `Q_NX(K)` for `K = 1..=N-2`, the local/global split `K_max`, and `Q_local`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityCurve {
    /// `q_nx[K - 1] = Q_NX(K)`.
    pub q_nx: Vec<f64>,
    pub k_max: usize,
    pub q_local: f64,
}

/// `Q_NX(K) = (1 / KN) sum_{k,l <= K} Q_kl`; `K_max` maximizes
/// `Q_NX(K) - K / (N - 1)` (smallest `K` on ties); `Q_local` averages
/// `Q_NX` over `1..=K_max`.
pub fn q_local(coranking: &CorankingMatrix) -> QualityCurve {
    let n = coranking.n();
    let m = n - 1;
    let c = |a: usize, b: usize| u64::from(coranking.counts[a * m + b]);
    let mut q_nx = Vec::with_capacity(n - 2);
    let mut inside: u64 = 0;
    for k in 0..(n - 2) {
        // grow the K x K block by its new row and column
        inside += (0..k).map(|l| c(k, l) + c(l, k)).sum::<u64>() + c(k, k);
        let big_k = (k + 1) as f64;
        q_nx.push(inside as f64 / (big_k * n as f64));
    }
    let mut k_max = 1;
    let mut best = f64::NEG_INFINITY;
    for (idx, &q) in q_nx.iter().enumerate() {
        let lcmc = q - (idx + 1) as f64 / m as f64;
        if lcmc > best {
            best = lcmc;
            k_max = idx + 1;
        }
    }
    let q_local = q_nx[..k_max].iter().sum::<f64>() / k_max as f64;
    QualityCurve {
        q_nx,
        k_max,
        q_local,
    }
}

/// Scores of one embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub knn_accuracy: Option<f64>,
    pub q_local: f64,
    pub q_nx_curve: Vec<f64>,
    pub k_max: usize,
}

/// k-NN accuracy (when labels are available) plus the co-ranking scores.
pub fn evaluate<T: Scalar>(
    high: &DataMatrix<T>,
    low: &Embedding<T>,
    labels: Option<&[i64]>,
    knn_k: usize,
) -> Result<EvalReport> {
    let knn = labels.map(|l| knn_accuracy(low, l, knn_k)).transpose()?;
    let curve = q_local(&coranking(high, low)?);
    Ok(EvalReport {
        knn_accuracy: knn,
        q_local: curve.q_local,
        q_nx_curve: curve.q_nx,
        k_max: curve.k_max,
    })
}
