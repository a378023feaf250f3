//! Optimizer inner loop for globally normalized kernels.
//!
//! Only the upper triangle is visited and no distance table is stored; `r` is
//! held implicitly as raw weights plus the two normalizers, so each iteration
//! streams roughly one `n x n` table instead of several.

use crate::data::sq_dist;
use crate::qkernel::PairKernel;
use crate::{Scalar, PROB_FLOOR};

pub(crate) struct JointState<T> {
    n: usize,
    dim: usize,
    kernel: PairKernel<T>,
    /// Raw weights at `[i * n + j]` for `j > i`; the rest is unused.
    weights: Vec<T>,
    /// `p` transposed, present only when `p` is not exactly symmetric.
    p_transposed: Option<Vec<T>>,
    p_mass: T,
    shift: T,
    inv_total: T,
    inv_kept: T,
}

impl<T: Scalar> JointState<T> {
    pub(crate) fn new(kernel: PairKernel<T>, p: &[T], n: usize, dim: usize) -> Self {
        let symmetric = (0..n).all(|i| ((i + 1)..n).all(|j| p[i * n + j] == p[j * n + i]));
        let p_transposed = (!symmetric).then(|| {
            let mut t = vec![T::zero(); n * n];
            for i in 0..n {
                for j in 0..n {
                    t[j * n + i] = p[i * n + j];
                }
            }
            t
        });
        Self {
            n,
            dim,
            kernel,
            weights: vec![T::zero(); n * n],
            p_transposed,
            p_mass: p.iter().fold(T::zero(), |acc, &v| acc + v),
            shift: T::zero(),
            inv_total: T::zero(),
            inv_kept: T::zero(),
        }
    }

    #[inline]
    fn p_pair<'a>(&'a self, p: &'a [T], i: usize) -> (&'a [T], &'a [T]) {
        let row = i * self.n..(i + 1) * self.n;
        match &self.p_transposed {
            Some(t) => (&p[row.clone()], &t[row]),
            None => (&p[row.clone()], &p[row]),
        }
    }

    #[inline]
    fn point<'a>(&self, y: &'a [T], i: usize) -> &'a [T] {
        &y[i * self.dim..(i + 1) * self.dim]
    }

    /// Recomputes the weights for coordinates `y` and returns
    /// `sum_{i != j, p_ij > 0} p_ij ln r_ij`.
    pub(crate) fn refresh(&mut self, y: &[T], p: &[T]) -> T {
        let n = self.n;
        self.shift = if self.kernel.is_exponential() {
            let mut m = T::infinity();
            for i in 0..n {
                let yi = self.point(y, i);
                for j in (i + 1)..n {
                    m = m.min(sq_dist(yi, self.point(y, j)));
                }
            }
            m
        } else {
            T::zero()
        };

        // Exponential log-weights are unbounded, so for them the cross term is
        // accumulated only after the floor decision to avoid cancellation.
        let fuse_logs = !self.kernel.is_exponential();
        let mut weights = std::mem::take(&mut self.weights);
        let mut total = T::zero();
        let mut cross = T::zero();
        for i in 0..n {
            let yi = self.point(y, i);
            let (p_row, pt_row) = self.p_pair(p, i);
            let w_row = &mut weights[i * n..(i + 1) * n];
            for j in (i + 1)..n {
                let d2 = sq_dist(yi, self.point(y, j)) - self.shift;
                let w = if fuse_logs {
                    let (w, log_w) = self.kernel.weight_and_log(d2);
                    cross += (p_row[j] + pt_row[j]) * log_w;
                    w
                } else {
                    self.kernel.weight(d2)
                };
                w_row[j] = w;
                total += w;
            }
        }
        total = total + total;

        // r = max(w / total, floor) / kept
        let floor = T::c(PROB_FLOOR);
        let inv_total = T::one() / total;
        let log_floor_total = floor.ln() + total.ln();
        let mut kept = T::zero();
        for i in 0..n {
            let yi = self.point(y, i);
            let (p_row, pt_row) = self.p_pair(p, i);
            let w_row = &weights[i * n..(i + 1) * n];
            for j in (i + 1)..n {
                let scaled = w_row[j] * inv_total;
                let floored = scaled < floor;
                kept += if floored { floor } else { scaled };
                let pp = p_row[j] + pt_row[j];
                if fuse_logs {
                    if floored && pp > T::zero() {
                        let d2 = sq_dist(yi, self.point(y, j)) - self.shift;
                        let log_w = self.kernel.weight_and_log(d2).1;
                        cross += pp * (log_floor_total - log_w);
                    }
                } else if pp > T::zero() {
                    cross += pp
                        * if floored {
                            log_floor_total
                        } else {
                            let d2 = sq_dist(yi, self.point(y, j)) - self.shift;
                            self.kernel.weight_and_log(d2).1
                        };
                }
            }
        }
        kept = kept + kept;
        self.weights = weights;
        self.inv_total = inv_total;
        self.inv_kept = T::one() / kept;
        cross - (total.ln() + kept.ln()) * self.p_mass
    }

    /// Gradient at the coordinates of the last [`Self::refresh`], with `p`
    /// multiplied by `p_scale` and the result by `scale`.
    pub(crate) fn gradient(&self, y: &[T], p: &[T], p_scale: T, scale: T, out: &mut [T]) {
        let n = self.n;
        let dim = self.dim;
        let floor = T::c(PROB_FLOOR);
        out.iter_mut().for_each(|v| *v = T::zero());
        let mut delta = vec![T::zero(); dim];
        for i in 0..n {
            let (p_row, pt_row) = self.p_pair(p, i);
            let w_row = &self.weights[i * n..(i + 1) * n];
            let yi = self.point(y, i);
            let (head, tail) = out.split_at_mut((i + 1) * dim);
            let gi = &mut head[i * dim..];
            for j in (i + 1)..n {
                let yj = self.point(y, j);
                for ((dk, &a), &b) in delta.iter_mut().zip(yi).zip(yj) {
                    *dk = a - b;
                }
                let d2 = sq_dist(yi, yj);
                let r = (w_row[j] * self.inv_total).max(floor) * self.inv_kept;
                let factor = self.kernel.gradient_factor(d2);
                let ci = (p_scale * p_row[j] - r) * factor;
                let cj = (p_scale * pt_row[j] - r) * factor;
                let gj = &mut tail[(j - i - 1) * dim..(j - i) * dim];
                for ((gik, gjk), &dk) in gi.iter_mut().zip(gj.iter_mut()).zip(&delta) {
                    *gik += ci * dk;
                    *gjk -= cj * dk;
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= scale);
    }
}
