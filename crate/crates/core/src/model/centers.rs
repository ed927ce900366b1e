use alloc::vec::Vec;

use super::behavior::CLUSTERS;
use super::network::LatentBatch;
use crate::error::{bail, Result};
use crate::real::Real;

/// One center per behavior cluster in latent space, kept in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterBank {
    dim: usize,
    centers: Vec<Vec<f64>>,
    updates: Vec<u64>,
}

impl CenterBank {
    /// Centers that have never been set; the contrastive loss rejects them.
    pub fn uninitialized(dim: usize) -> Self {
        Self { dim, centers: alloc::vec![alloc::vec![0.0; dim]; CLUSTERS], updates: alloc::vec![0; CLUSTERS] }
    }

    pub fn from_centers(centers: Vec<Vec<f64>>) -> Result<Self> {
        if centers.len() != CLUSTERS {
            bail!(Shape, "expected {CLUSTERS} centers, got {}", centers.len());
        }
        let dim = centers[0].len();
        if centers.iter().any(|c| c.len() != dim) {
            bail!(Shape, "centers have differing dimensions");
        }
        if centers.iter().flatten().any(|v| !v.is_finite()) {
            bail!(OutOfRange, "centers must be finite");
        }
        Ok(Self { dim, centers, updates: alloc::vec![1; CLUSTERS] })
    }

    /// Per-cluster means of `rows`; every cluster must be represented.
    pub fn from_cluster_means<T: Real>(batch: &LatentBatch<T>) -> Result<Self> {
        let (sums, counts) = cluster_sums(batch)?;
        for (j, &n) in counts.iter().enumerate() {
            if n == 0 {
                bail!(InsufficientData, "behavior cluster {j} has no training samples");
            }
        }
        let centers = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
            .collect();
        Self::from_centers(centers)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j]
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn update_counts(&self) -> &[u64] {
        &self.updates
    }

    pub fn is_initialized(&self) -> bool {
        self.updates.iter().all(|&n| n > 0)
    }

    /// `c_j ← (1 − momentum)·c_j + momentum·mean(x_i : e_i = j)`; clusters
    /// absent from the batch are left alone.
    pub fn update<T: Real>(&mut self, batch: &LatentBatch<T>, momentum: f64) -> Result<()> {
        if batch.dim() != self.dim {
            bail!(Shape, "latent dim {} does not match centers of dim {}", batch.dim(), self.dim);
        }
        let (sums, counts) = cluster_sums(batch)?;
        for j in 0..CLUSTERS {
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            for (c, s) in self.centers[j].iter_mut().zip(&sums[j]) {
                *c = (1.0 - momentum) * *c + momentum * s * inv;
            }
            self.updates[j] += 1;
        }
        Ok(())
    }
}

fn cluster_sums<T: Real>(batch: &LatentBatch<T>) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if batch.clusters.len() != batch.len() {
        bail!(Shape, "{} cluster ids for {} latents", batch.clusters.len(), batch.len());
    }
    let dim = batch.dim();
    let mut sums = alloc::vec![alloc::vec![0.0f64; dim]; CLUSTERS];
    let mut counts = alloc::vec![0usize; CLUSTERS];
    for (i, &e) in batch.clusters.iter().enumerate() {
        if e >= CLUSTERS {
            bail!(OutOfRange, "cluster id {e} is not below {CLUSTERS}");
        }
        counts[e] += 1;
        for (s, v) in sums[e].iter_mut().zip(batch.row(i)) {
            *s += v.as_f64();
        }
    }
    Ok((sums, counts))
}
