//! 2x2x2 max pooling, nearest-neighbour 2x upsampling and ReLU.

use alloc::vec::Vec;

use super::tensor::Tensor5;
use crate::error::{bail, Result};
use crate::real::Real;

/// Returns the pooled tensor and, per output voxel, the linear index of the
/// winning voxel inside its input channel volume. Ties keep the lowest index.
pub fn maxpool3d<T: Real>(x: &Tensor5<T>) -> Result<(Tensor5<T>, Vec<u32>)> {
    let [nb, nc, nx, ny, nz] = x.shape();
    if nx % 2 != 0 || ny % 2 != 0 || nz % 2 != 0 {
        bail!(Shape, "max pooling needs even spatial dims, got {:?}", x.spatial());
    }
    let (ox, oy, oz) = (nx / 2, ny / 2, nz / 2);
    let mut out = Tensor5::zeros([nb, nc, ox, oy, oz]);
    let mut argmax = alloc::vec![0u32; out.data().len()];
    let v_in = nx * ny * nz;
    let v_out = ox * oy * oz;
    for bc in 0..nb * nc {
        let src = &x.data()[bc * v_in..(bc + 1) * v_in];
        let dst = &mut out.data_mut()[bc * v_out..(bc + 1) * v_out];
        let idx = &mut argmax[bc * v_out..(bc + 1) * v_out];
        for z in 0..oz {
            for y in 0..oy {
                for xx in 0..ox {
                    let mut best_i = 2 * xx + nx * (2 * y + ny * 2 * z);
                    let mut best = src[best_i];
                    for dz in 0..2 {
                        for dy in 0..2 {
                            let row = nx * ((2 * y + dy) + ny * (2 * z + dz));
                            for dx in 0..2 {
                                let i = row + 2 * xx + dx;
                                if src[i] > best {
                                    best = src[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    let o = xx + ox * (y + oy * z);
                    dst[o] = best;
                    idx[o] = best_i as u32;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each pooled gradient to the voxel that won the forward max.
pub fn maxpool3d_backward<T: Real>(
    dy: &Tensor5<T>,
    argmax: &[u32],
    input_shape: [usize; 5],
) -> Result<Tensor5<T>> {
    let [nb, nc, nx, ny, nz] = input_shape;
    if dy.shape() != [nb, nc, nx / 2, ny / 2, nz / 2] || argmax.len() != dy.data().len() {
        bail!(Shape, "max-pool backward got {:?} for input {:?}", dy.shape(), input_shape);
    }
    let mut dx = Tensor5::zeros(input_shape);
    let v_in = nx * ny * nz;
    let v_out = dy.volume();
    for bc in 0..nb * nc {
        let d = &mut dx.data_mut()[bc * v_in..(bc + 1) * v_in];
        let g = &dy.data()[bc * v_out..(bc + 1) * v_out];
        for (&i, &gv) in argmax[bc * v_out..(bc + 1) * v_out].iter().zip(g) {
            d[i as usize] += gv;
        }
    }
    Ok(dx)
}

/// Replicates every voxel into a 2x2x2 block.
pub fn upsample_nearest<T: Real>(x: &Tensor5<T>) -> Tensor5<T> {
    let [nb, nc, nx, ny, nz] = x.shape();
    let (ox, oy, oz) = (2 * nx, 2 * ny, 2 * nz);
    let mut out = Tensor5::zeros([nb, nc, ox, oy, oz]);
    let v_in = nx * ny * nz;
    let v_out = ox * oy * oz;
    for bc in 0..nb * nc {
        let src = &x.data()[bc * v_in..(bc + 1) * v_in];
        let dst = &mut out.data_mut()[bc * v_out..(bc + 1) * v_out];
        for z in 0..oz {
            for y in 0..oy {
                let s = &src[nx * (y / 2 + ny * (z / 2))..][..nx];
                let d = &mut dst[ox * (y + oy * z)..][..ox];
                for (xx, e) in d.iter_mut().enumerate() {
                    *e = s[xx / 2];
                }
            }
        }
    }
    out
}

/// Sums each 2x2x2 block of the upstream gradient.
pub fn upsample_nearest_backward<T: Real>(dy: &Tensor5<T>) -> Result<Tensor5<T>> {
    let [nb, nc, ox, oy, oz] = dy.shape();
    if ox % 2 != 0 || oy % 2 != 0 || oz % 2 != 0 {
        bail!(Shape, "upsample backward needs even dims, got {:?}", dy.spatial());
    }
    let (nx, ny, nz) = (ox / 2, oy / 2, oz / 2);
    let mut dx = Tensor5::zeros([nb, nc, nx, ny, nz]);
    let v_in = nx * ny * nz;
    let v_out = ox * oy * oz;
    for bc in 0..nb * nc {
        let g = &dy.data()[bc * v_out..(bc + 1) * v_out];
        let d = &mut dx.data_mut()[bc * v_in..(bc + 1) * v_in];
        for z in 0..oz {
            for y in 0..oy {
                let row = &g[ox * (y + oy * z)..][..ox];
                let dst = &mut d[nx * (y / 2 + ny * (z / 2))..][..nx];
                for (xx, &gv) in row.iter().enumerate() {
                    dst[xx / 2] += gv;
                }
            }
        }
    }
    Ok(dx)
}

pub fn relu<T: Real>(x: &Tensor5<T>) -> Tensor5<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its forward output (`y > 0` iff `x > 0`).
pub fn relu_backward<T: Real>(y: &Tensor5<T>, dy: &Tensor5<T>) -> Result<Tensor5<T>> {
    if y.shape() != dy.shape() {
        bail!(Shape, "relu backward got {:?} for {:?}", dy.shape(), y.shape());
    }
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor5::from_vec(y.shape(), data)
}
