//! 3x3x3 convolution, stride 1, zero padding 1.
//!
//! Layers with many output channels are lowered to one matrix product per
//! sub-batch through an im2col buffer. Layers with few output channels (the
//! decoder's last conv) use shifted multiply-adds instead, since the lowered
//! product degenerates to a matrix-vector product there.

use alloc::vec::Vec;

use rand::Rng;

use super::tensor::Tensor5;
use crate::error::{bail, Result};
use crate::real::Real;

pub const TAPS: usize = 27;

/// Output channel count at or below which the direct kernel is used.
const DIRECT_MAX_OUT: usize = 4;
/// Upper bound on im2col buffer entries; larger batches are split.
const COL_BUDGET: usize = 1 << 19;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][kz][ky][kx]`, kx fastest.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv3d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: alloc::vec![T::zero(); out_channels * in_channels * TAPS],
            bias: alloc::vec![T::zero(); out_channels],
        }
    }

    /// Uniform in `±sqrt(1 / fan_in)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let bound = libm::sqrt(1.0 / (in_channels * TAPS) as f64);
        let mut draw = || T::of(rng.gen_range(-bound..bound));
        let weight = (0..out_channels * in_channels * TAPS).map(|_| draw()).collect();
        let bias = (0..out_channels).map(|_| draw()).collect();
        Self { in_channels, out_channels, weight, bias }
    }

    fn rows(&self) -> usize {
        self.in_channels * TAPS
    }

    fn chunk_len(&self, volume: usize) -> usize {
        (COL_BUDGET / (self.rows() * volume)).max(1)
    }

    pub fn forward(&self, x: &Tensor5<T>) -> Result<Tensor5<T>> {
        if x.channels() != self.in_channels {
            bail!(
                Shape,
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            );
        }
        let dims = x.spatial();
        let mut out = Tensor5::zeros([x.batch(), self.out_channels, dims[0], dims[1], dims[2]]);
        if self.out_channels <= DIRECT_MAX_OUT {
            for b in 0..x.batch() {
                self.direct_forward(x.sample(b), dims, out.sample_mut(b));
            }
            return Ok(out);
        }
        let v = x.volume();
        let r = self.rows();
        let (cin, cout) = (self.in_channels, self.out_channels);
        let chunk = self.chunk_len(v);
        let mut col = Vec::new();
        let mut prod = Vec::new();
        for start in (0..x.batch()).step_by(chunk) {
            let nb = chunk.min(x.batch() - start);
            let width = nb * v;
            col.resize(r * width, T::zero());
            prod.resize(cout * width, T::zero());
            for j in 0..nb {
                im2col(x.sample(start + j), cin, dims, &mut col, width, j * v);
            }
            T::gemm(cout, r, width, T::one(), &self.weight, (r as isize, 1), &col, (width as isize, 1), T::zero(), &mut prod, (width as isize, 1));
            for j in 0..nb {
                let y = out.sample_mut(start + j);
                for o in 0..cout {
                    let bias = self.bias[o];
                    let src = &prod[o * width + j * v..o * width + (j + 1) * v];
                    for (e, &p) in y[o * v..(o + 1) * v].iter_mut().zip(src) {
                        *e = p + bias;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates weight and bias gradients into `dw`/`db`; returns the input
    /// gradient when `need_input_grad` is set.
    pub fn backward(
        &self,
        x: &Tensor5<T>,
        dy: &Tensor5<T>,
        dw: &mut [T],
        db: &mut [T],
        need_input_grad: bool,
    ) -> Result<Option<Tensor5<T>>> {
        let dims = x.spatial();
        let expected = [x.batch(), self.out_channels, dims[0], dims[1], dims[2]];
        if dy.shape() != expected || x.channels() != self.in_channels {
            bail!(Shape, "conv backward got dy {:?}, expected {:?}", dy.shape(), expected);
        }
        let v = x.volume();
        for b in 0..x.batch() {
            for (o, row) in dy.sample(b).chunks_exact(v).enumerate() {
                db[o] += row.iter().copied().sum::<T>();
            }
        }
        let mut dx = need_input_grad.then(|| Tensor5::zeros(x.shape()));
        if self.out_channels <= DIRECT_MAX_OUT {
            for b in 0..x.batch() {
                self.direct_backward(x.sample(b), dy.sample(b), dims, dw, dx.as_mut().map(|d| d.sample_mut(b)));
            }
            return Ok(dx);
        }
        let r = self.rows();
        let (cin, cout) = (self.in_channels, self.out_channels);
        let chunk = self.chunk_len(v);
        let mut col = Vec::new();
        let mut g = Vec::new();
        for start in (0..x.batch()).step_by(chunk) {
            let nb = chunk.min(x.batch() - start);
            let width = nb * v;
            col.resize(r * width, T::zero());
            g.resize(cout * width, T::zero());
            for j in 0..nb {
                im2col(x.sample(start + j), cin, dims, &mut col, width, j * v);
                let src = dy.sample(start + j);
                for o in 0..cout {
                    g[o * width + j * v..o * width + (j + 1) * v].copy_from_slice(&src[o * v..(o + 1) * v]);
                }
            }
            T::gemm(cout, width, r, T::one(), &g, (width as isize, 1), &col, (1, width as isize), T::one(), dw, (r as isize, 1));
            if let Some(dx) = dx.as_mut() {
                T::gemm(r, cout, width, T::one(), &self.weight, (1, r as isize), &g, (width as isize, 1), T::zero(), &mut col, (width as isize, 1));
                for j in 0..nb {
                    col2im(&col, cin, dims, width, j * v, dx.sample_mut(start + j));
                }
            }
        }
        Ok(dx)
    }

    fn direct_forward(&self, x: &[T], dims: [usize; 3], y: &mut [T]) {
        let grid = Padded::new(dims);
        let xp = grid.pad(x, self.in_channels);
        let np = grid.len();
        let mut acc = alloc::vec![T::zero(); np];
        for o in 0..self.out_channels {
            acc.fill(T::zero());
            for ci in 0..self.in_channels {
                let src = &xp[ci * np..(ci + 1) * np];
                for k in 0..TAPS {
                    let w = self.weight[(o * self.in_channels + ci) * TAPS + k];
                    let (dst, from) = grid.shifted(k);
                    for (a, &e) in acc[dst.clone()].iter_mut().zip(&src[from]) {
                        *a += w * e;
                    }
                }
            }
            grid.extract_into(&acc, &mut y[o * grid.volume..(o + 1) * grid.volume], self.bias[o]);
        }
    }

    fn direct_backward(&self, x: &[T], dy: &[T], dims: [usize; 3], dw: &mut [T], dx: Option<&mut [T]>) {
        let grid = Padded::new(dims);
        let np = grid.len();
        let xp = grid.pad(x, self.in_channels);
        let gp = grid.pad(dy, self.out_channels);
        let mut dxp = dx.as_ref().map(|_| alloc::vec![T::zero(); self.in_channels * np]);
        for o in 0..self.out_channels {
            let g = &gp[o * np..(o + 1) * np];
            for ci in 0..self.in_channels {
                let src = &xp[ci * np..(ci + 1) * np];
                for k in 0..TAPS {
                    let wi = (o * self.in_channels + ci) * TAPS + k;
                    let (dst, from) = grid.shifted(k);
                    dw[wi] += lane_dot(&g[dst.clone()], &src[from.clone()]);
                    if let Some(d) = dxp.as_mut() {
                        let w = self.weight[wi];
                        for (e, &gv) in d[ci * np..(ci + 1) * np][from].iter_mut().zip(&g[dst]) {
                            *e += w * gv;
                        }
                    }
                }
            }
        }
        if let (Some(dx), Some(dxp)) = (dx, dxp) {
            for ci in 0..self.in_channels {
                let v = grid.volume;
                grid.extract_into(&dxp[ci * np..(ci + 1) * np], &mut dx[ci * v..(ci + 1) * v], T::zero());
            }
        }
    }
}

/// A grid with a one-voxel zero border, so that every tap is a constant
/// linear offset and the direct kernel runs over long contiguous ranges.
struct Padded {
    dims: [usize; 3],
    p: [usize; 3],
    volume: usize,
}

impl Padded {
    fn new(dims: [usize; 3]) -> Self {
        Self { dims, p: [dims[0] + 2, dims[1] + 2, dims[2] + 2], volume: dims[0] * dims[1] * dims[2] }
    }

    fn len(&self) -> usize {
        self.p[0] * self.p[1] * self.p[2]
    }

    fn pad<T: Real>(&self, x: &[T], channels: usize) -> Vec<T> {
        let [nx, ny, nz] = self.dims;
        let np = self.len();
        let mut out = alloc::vec![T::zero(); channels * np];
        for c in 0..channels {
            for z in 0..nz {
                for y in 0..ny {
                    let src = c * self.volume + (z * ny + y) * nx;
                    let dst = c * np + ((z + 1) * self.p[1] + y + 1) * self.p[0] + 1;
                    out[dst..dst + nx].copy_from_slice(&x[src..src + nx]);
                }
            }
        }
        out
    }

    /// Interior of a padded buffer plus `shift`.
    fn extract_into<T: Real>(&self, padded: &[T], out: &mut [T], shift: T) {
        let [nx, ny, nz] = self.dims;
        for z in 0..nz {
            for y in 0..ny {
                let src = ((z + 1) * self.p[1] + y + 1) * self.p[0] + 1;
                let dst = (z * ny + y) * nx;
                for (o, &e) in out[dst..dst + nx].iter_mut().zip(&padded[src..src + nx]) {
                    *o = e + shift;
                }
            }
        }
    }

    /// Ranges `(dst, src)` with `src = dst + offset(k)`, both inside the
    /// padded buffer. Every interior output reads only in-buffer voxels.
    fn shifted(&self, k: usize) -> (core::ops::Range<usize>, core::ops::Range<usize>) {
        let [ox, oy, oz] = tap_offsets(k);
        let off = ox + oy * self.p[0] as isize + oz * (self.p[0] * self.p[1]) as isize;
        let n = self.len() as isize;
        let lo = (-off).max(0);
        let hi = n - off.max(0);
        (lo as usize..hi as usize, (lo + off) as usize..(hi + off) as usize)
    }
}

fn lane_dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&p, &q)| p * q).sum();
    for (p, q) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += p[l] * q[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

#[inline]
fn tap_offsets(k: usize) -> [isize; 3] {
    [(k % 3) as isize - 1, ((k / 3) % 3) as isize - 1, (k / 9) as isize - 1]
}

/// Calls `f(dst_start, src_start, len)` for every x-row segment where output
/// voxel `p` reads input voxel `p + offset` inside the grid.
#[inline]
fn for_each_shifted_row(dims: [usize; 3], [ox, oy, oz]: [isize; 3], mut f: impl FnMut(usize, usize, usize)) {
    let [nx, ny, nz] = dims;
    let (x0, len) = match ox {
        0 => (0, nx),
        1 => (0, nx - 1),
        _ => (1, nx - 1),
    };
    if len == 0 {
        return;
    }
    for z in 0..nz {
        let sz = z as isize + oz;
        if sz < 0 || sz >= nz as isize {
            continue;
        }
        for y in 0..ny {
            let sy = y as isize + oy;
            if sy < 0 || sy >= ny as isize {
                continue;
            }
            let dst = (z * ny + y) * nx + x0;
            let src = (sz as usize * ny + sy as usize) * nx + (x0 as isize + ox) as usize;
            f(dst, src, len);
        }
    }
}

/// Row `ci * 27 + k` of `col` (row length `width`, this sample starting at
/// column `offset`) holds channel `ci` shifted by tap `k`.
fn im2col<T: Real>(x: &[T], channels: usize, dims: [usize; 3], col: &mut [T], width: usize, offset: usize) {
    let v = dims[0] * dims[1] * dims[2];
    for ci in 0..channels {
        let src = &x[ci * v..(ci + 1) * v];
        for k in 0..TAPS {
            let start = (ci * TAPS + k) * width + offset;
            let row = &mut col[start..start + v];
            row.fill(T::zero());
            for_each_shifted_row(dims, tap_offsets(k), |d, s, len| {
                row[d..d + len].copy_from_slice(&src[s..s + len]);
            });
        }
    }
}

/// Adjoint of `im2col`: scatter-adds every row back to its source voxels.
fn col2im<T: Real>(col: &[T], channels: usize, dims: [usize; 3], width: usize, offset: usize, dx: &mut [T]) {
    let v = dims[0] * dims[1] * dims[2];
    for ci in 0..channels {
        let dst = &mut dx[ci * v..(ci + 1) * v];
        for k in 0..TAPS {
            let start = (ci * TAPS + k) * width + offset;
            let row = &col[start..start + v];
            for_each_shifted_row(dims, tap_offsets(k), |d, s, len| {
                for (a, &b) in dst[s..s + len].iter_mut().zip(&row[d..d + len]) {
                    *a += b;
                }
            });
        }
    }
}
