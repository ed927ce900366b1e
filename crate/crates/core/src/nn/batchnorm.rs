use alloc::vec::Vec;

use super::tensor::Tensor5;
use crate::error::{bail, Result};
use crate::real::Real;

/// Per-channel batch normalization over batch and spatial axes.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm3d<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// Weight of the current batch in the running-statistics update.
    pub momentum: T,
    pub eps: T,
}

/// What the backward pass needs from a training-mode forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub xhat: Tensor5<T>,
    pub inv_std: Vec<T>,
}

impl<T: Real> BatchNorm3d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: alloc::vec![T::one(); channels],
            beta: alloc::vec![T::zero(); channels],
            running_mean: alloc::vec![T::zero(); channels],
            running_var: alloc::vec![T::one(); channels],
            momentum: T::of(0.1),
            eps: T::of(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor5<T>) -> Result<()> {
        if x.channels() != self.channels() {
            bail!(Shape, "batchnorm has {} channels, input has {}", self.channels(), x.channels());
        }
        Ok(())
    }

    /// Normalizes with batch statistics and folds them into the running estimates.
    pub fn forward_train(&mut self, x: &Tensor5<T>) -> Result<(Tensor5<T>, BatchNormCache<T>)> {
        self.check(x)?;
        let (nb, nc, v) = (x.batch(), x.channels(), x.volume());
        let n = nb * v;
        if n < 2 {
            bail!(InsufficientData, "training-mode batchnorm needs at least 2 values per channel");
        }
        let mut xhat = Tensor5::zeros(x.shape());
        let mut y = Tensor5::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(nc);
        for c in 0..nc {
            let sum: f64 = (0..nb).map(|b| lane_sum(chan(x, b, c), |e| e)).sum();
            let mean = sum / n as f64;
            let sq: f64 = (0..nb)
                .map(|b| {
                    lane_sum(chan(x, b, c), |e| {
                        let d = e - mean;
                        d * d
                    })
                })
                .sum();
            let var = sq / n as f64;
            let istd = 1.0 / libm::sqrt(var + self.eps.as_f64());
            let (mean_t, istd_t) = (T::of(mean), T::of(istd));
            let (g, bta) = (self.gamma[c], self.beta[c]);
            for b in 0..nb {
                let src = chan(x, b, c);
                let start = (b * nc + c) * v;
                let xh = &mut xhat.data_mut()[start..start + v];
                for (h, &e) in xh.iter_mut().zip(src) {
                    *h = (e - mean_t) * istd_t;
                }
                let out = &mut y.data_mut()[start..start + v];
                for (o, &h) in out.iter_mut().zip(&xhat.data()[start..start + v]) {
                    *o = g * h + bta;
                }
            }
            inv_std.push(istd_t);
            let m = self.momentum.as_f64();
            let unbiased = var * n as f64 / (n - 1) as f64;
            self.running_mean[c] = T::of((1.0 - m) * self.running_mean[c].as_f64() + m * mean);
            self.running_var[c] = T::of((1.0 - m) * self.running_var[c].as_f64() + m * unbiased);
        }
        Ok((y, BatchNormCache { xhat, inv_std }))
    }

    /// Normalizes with the running statistics; samples are independent.
    pub fn forward_eval(&self, x: &Tensor5<T>) -> Result<Tensor5<T>> {
        self.check(x)?;
        let (nb, nc, v) = (x.batch(), x.channels(), x.volume());
        let mut y = x.clone();
        for c in 0..nc {
            let istd = T::one() / (self.running_var[c] + self.eps).sqrt();
            let scale = self.gamma[c] * istd;
            let shift = self.beta[c] - self.running_mean[c] * scale;
            for b in 0..nb {
                let start = (b * nc + c) * v;
                y.data_mut()[start..start + v].iter_mut().for_each(|e| *e = *e * scale + shift);
            }
        }
        Ok(y)
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache<T>,
        dy: &Tensor5<T>,
        dgamma: &mut [T],
        dbeta: &mut [T],
    ) -> Result<Tensor5<T>> {
        if dy.shape() != cache.xhat.shape() {
            bail!(Shape, "batchnorm backward got {:?}, expected {:?}", dy.shape(), cache.xhat.shape());
        }
        let (nb, nc, v) = (dy.batch(), dy.channels(), dy.volume());
        let n = (nb * v) as f64;
        let mut dx = Tensor5::zeros(dy.shape());
        for c in 0..nc {
            let (mut sg, mut sgx) = (0.0f64, 0.0f64);
            for b in 0..nb {
                let start = (b * nc + c) * v;
                let g = &dy.data()[start..start + v];
                sg += lane_sum(g, |e| e);
                sgx += lane_dot(g, &cache.xhat.data()[start..start + v]);
            }
            dgamma[c] += T::of(sgx);
            dbeta[c] += T::of(sg);
            let k = T::of(self.gamma[c].as_f64() * cache.inv_std[c].as_f64() / n);
            let (sg_t, sgx_t, n_t) = (T::of(sg), T::of(sgx), T::of(n));
            for b in 0..nb {
                let start = (b * nc + c) * v;
                let xh = &cache.xhat.data()[start..start + v];
                let g = &dy.data()[start..start + v];
                let d = &mut dx.data_mut()[start..start + v];
                for ((o, &gv), &h) in d.iter_mut().zip(g).zip(xh) {
                    *o = k * (n_t * gv - sg_t - h * sgx_t);
                }
            }
        }
        Ok(dx)
    }
}

#[inline]
fn chan<T: Real>(x: &Tensor5<T>, b: usize, c: usize) -> &[T] {
    let v = x.volume();
    let start = (b * x.channels() + c) * v;
    &x.data()[start..start + v]
}

const LANES: usize = 8;

/// `Σ f(x_i)` in f64 with independent lane accumulators, so the loop
/// vectorizes while staying deterministic.
fn lane_sum<T: Real>(xs: &[T], f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = [0.0f64; LANES];
    let chunks = xs.chunks_exact(LANES);
    let tail: f64 = chunks.remainder().iter().map(|e| f(e.as_f64())).sum();
    for ch in chunks {
        for l in 0..LANES {
            acc[l] += f(ch[l].as_f64());
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn lane_dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(p, q)| p.as_f64() * q.as_f64()).sum();
    for (p, q) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += p[l].as_f64() * q[l].as_f64();
        }
    }
    acc.iter().sum::<f64>() + tail
}
