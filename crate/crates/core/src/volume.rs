//! Dense voxel grids and the preprocessing steps applied before training:
//! time windowing, temporal averaging, z-scoring and zero padding.
//!
//! Voxels are stored x-fastest: the linear index of `(x, y, z)` is
//! `x + nx * (y + ny * z)`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Result};

pub type Dims = [usize; 3];

#[inline]
pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// A single 3D image in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    voxel_size_mm: [f64; 3],
    data: Vec<f64>,
}

impl Volume3D {
    pub fn new(dims: Dims, voxel_size_mm: [f64; 3], data: Vec<f64>) -> Result<Self> {
        check_grid(dims, voxel_size_mm)?;
        if data.len() != voxel_count(dims) {
            bail!(
                Shape,
                "volume {:?} needs {} voxels, got {}",
                dims,
                voxel_count(dims),
                data.len()
            );
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            bail!(OutOfRange, "non-finite voxel value at index {i}");
        }
        Ok(Self { dims, voxel_size_mm, data })
    }

    pub fn zeros(dims: Dims, voxel_size_mm: [f64; 3]) -> Result<Self> {
        Self::new(dims, voxel_size_mm, alloc::vec![0.0; voxel_count(dims)])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxel_size_mm(&self) -> [f64; 3] {
        self.voxel_size_mm
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    /// Per-volume z-scoring. A (near) constant volume is only mean-centered.
    pub fn normalized(&self) -> Volume3D {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        let var = self.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = libm::sqrt(var);
        let scale = if std < 1e-8 { 1.0 } else { 1.0 / std };
        Volume3D {
            dims: self.dims,
            voxel_size_mm: self.voxel_size_mm,
            data: self.data.iter().map(|v| (v - mean) * scale).collect(),
        }
    }

    /// Centers the volume inside a larger zero grid. When a margin is odd the
    /// extra voxel goes on the high side.
    pub fn padded(&self, target: Dims) -> Result<Volume3D> {
        if (0..3).any(|a| target[a] < self.dims[a]) {
            bail!(
                Shape,
                "pad target {:?} is smaller than source {:?}",
                target,
                self.dims
            );
        }
        let offset: [usize; 3] = core::array::from_fn(|a| (target[a] - self.dims[a]) / 2);
        let mut data = alloc::vec![0.0; voxel_count(target)];
        let [nx, ny, nz] = self.dims;
        for z in 0..nz {
            for y in 0..ny {
                let src = nx * (y + ny * z);
                let dst = offset[0] + target[0] * ((y + offset[1]) + target[1] * (z + offset[2]));
                data[dst..dst + nx].copy_from_slice(&self.data[src..src + nx]);
            }
        }
        Ok(Volume3D { dims: target, voxel_size_mm: self.voxel_size_mm, data })
    }
}

/// A time series of 3D frames, stored in single precision as on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume4D {
    dims: Dims,
    voxel_size_mm: [f64; 3],
    nt: usize,
    data: Vec<f32>,
}

impl Volume4D {
    pub fn new(dims: Dims, voxel_size_mm: [f64; 3], nt: usize, data: Vec<f32>) -> Result<Self> {
        check_grid(dims, voxel_size_mm)?;
        if nt == 0 {
            bail!(Shape, "a scan needs at least one timepoint");
        }
        if data.len() != voxel_count(dims) * nt {
            bail!(
                Shape,
                "scan {:?} x {} needs {} values, got {}",
                dims,
                nt,
                voxel_count(dims) * nt,
                data.len()
            );
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            bail!(OutOfRange, "non-finite voxel value at index {i}");
        }
        Ok(Self { dims, voxel_size_mm, nt, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxel_size_mm(&self) -> [f64; 3] {
        self.voxel_size_mm
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Frame `t` (0-based) as raw values.
    pub fn frame_data(&self, t: usize) -> &[f32] {
        let n = voxel_count(self.dims);
        &self.data[t * n..(t + 1) * n]
    }

    /// Frame `t` (0-based) as a double-precision volume.
    pub fn frame(&self, t: usize) -> Volume3D {
        Volume3D {
            dims: self.dims,
            voxel_size_mm: self.voxel_size_mm,
            data: self.frame_data(t).iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Frames `start..=end`, 1-based and inclusive on both ends.
    pub fn select_time_window(&self, start: usize, end: usize) -> Result<Volume4D> {
        if start < 1 || start > end || end > self.nt {
            bail!(
                OutOfRange,
                "time window [{start}, {end}] must satisfy 1 <= start <= end <= {}",
                self.nt
            );
        }
        let n = voxel_count(self.dims);
        Ok(Volume4D {
            dims: self.dims,
            voxel_size_mm: self.voxel_size_mm,
            nt: end - start + 1,
            data: self.data[(start - 1) * n..end * n].to_vec(),
        })
    }

    /// Per-voxel arithmetic mean over all frames.
    pub fn time_average(&self) -> Volume3D {
        let n = voxel_count(self.dims);
        let mut acc = alloc::vec![0.0f64; n];
        for frame in self.data.chunks_exact(n) {
            for (a, &v) in acc.iter_mut().zip(frame) {
                *a += f64::from(v);
            }
        }
        let inv = 1.0 / self.nt as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Volume3D { dims: self.dims, voxel_size_mm: self.voxel_size_mm, data: acc }
    }
}

fn check_grid(dims: Dims, voxel_size_mm: [f64; 3]) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        bail!(Shape, "volume dims must be positive, got {:?}", dims);
    }
    if voxel_size_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        bail!(OutOfRange, "voxel size must be positive, got {:?}", voxel_size_mm);
    }
    Ok(())
}

/// Region label map with region names (0 is background).
#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    dims: Dims,
    labels: Vec<u32>,
    names: BTreeMap<u32, String>,
}

impl Atlas {
    pub fn new(dims: Dims, labels: Vec<u32>, names: BTreeMap<u32, String>) -> Result<Self> {
        if labels.len() != voxel_count(dims) {
            bail!(Shape, "atlas {:?} needs {} labels, got {}", dims, voxel_count(dims), labels.len());
        }
        for &l in &labels {
            if l != 0 && !names.contains_key(&l) {
                bail!(OutOfRange, "atlas label {l} has no name entry");
            }
        }
        Ok(Self { dims, labels, names })
    }

    /// Builds an atlas from a label volume whose values must be non-negative integers.
    pub fn from_label_volume(
        vol: &Volume3D,
        names: BTreeMap<u32, String>,
        expected_dims: Option<Dims>,
    ) -> Result<Self> {
        if let Some(expected) = expected_dims {
            if expected != vol.dims() {
                bail!(Shape, "atlas dims {:?} do not match data grid {:?}", vol.dims(), expected);
            }
        }
        let mut labels = Vec::with_capacity(vol.len());
        for (i, &v) in vol.data().iter().enumerate() {
            if v < 0.0 || libm::trunc(v) != v || v > f64::from(u32::MAX) {
                bail!(OutOfRange, "atlas value {v} at voxel {i} is not a non-negative integer");
            }
            labels.push(v as u32);
        }
        Self::new(vol.dims(), labels, names)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn names(&self) -> &BTreeMap<u32, String> {
        &self.names
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(&id).map(String::as_str)
    }

    /// Region ids that own at least one voxel, ascending.
    pub fn region_ids(&self) -> Vec<u32> {
        let mut present: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        present.sort_unstable();
        present.dedup();
        present
    }

    pub fn to_label_volume(&self, voxel_size_mm: [f64; 3]) -> Result<Volume3D> {
        Volume3D::new(
            self.dims,
            voxel_size_mm,
            self.labels.iter().map(|&l| f64::from(l)).collect(),
        )
    }
}
