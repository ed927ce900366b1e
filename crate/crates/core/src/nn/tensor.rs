use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::real::Real;

/// Dense `(batch, channels, nx, ny, nz)` activation tensor, x-fastest within
/// each channel volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor5<T> {
    shape: [usize; 5],
    data: Vec<T>,
}

impl<T: Real> Tensor5<T> {
    pub fn zeros(shape: [usize; 5]) -> Self {
        Self { shape, data: alloc::vec![T::zero(); shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 5], data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            bail!(Shape, "tensor dims must be positive, got {:?}", shape);
        }
        let n: usize = shape.iter().product();
        if data.len() != n {
            bail!(Shape, "tensor {:?} needs {} values, got {}", shape, n, data.len());
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[2], self.shape[3], self.shape[4]]
    }

    /// Voxels per channel volume.
    pub fn volume(&self) -> usize {
        self.shape[2] * self.shape[3] * self.shape[4]
    }

    /// Values per batch item.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.volume()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Same data viewed with another shape of equal size.
    pub fn reshaped(self, shape: [usize; 5]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            bail!(Shape, "cannot add {:?} to {:?}", other.shape, self.shape);
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Tensor5<U> {
        Tensor5 { shape: self.shape, data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }
}
