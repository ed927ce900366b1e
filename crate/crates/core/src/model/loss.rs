use super::centers::CenterBank;
use super::network::LatentBatch;
use crate::error::{bail, Error, Result};
use crate::nn::Tensor5;
use crate::real::Real;

/// `L_rec = (1/N) Σ_i ‖X_i − Y_i‖²`, the norm summing over every voxel of a
/// sample. Returns the loss and its gradient with respect to `recon`.
pub fn reconstruction_loss<T: Real>(recon: &Tensor5<T>, target: &Tensor5<T>) -> Result<(f64, Tensor5<T>)> {
    if recon.shape() != target.shape() {
        bail!(Shape, "reconstruction {:?} vs original {:?}", recon.shape(), target.shape());
    }
    let n = recon.batch() as f64;
    let mut sum = 0.0f64;
    let scale = T::of(2.0 / n);
    let grad = recon
        .data()
        .iter()
        .zip(target.data())
        .map(|(&x, &y)| {
            let d = x - y;
            sum += d.as_f64() * d.as_f64();
            scale * d
        })
        .collect();
    Ok((sum / n, Tensor5::from_vec(recon.shape(), grad)?))
}

/// Contrastive center loss
/// `½ Σ_i ‖x_i − c_{e_i}‖² / (Σ_{j≠e_i} ‖x_i − c_j‖² + δ)`
/// summed over the samples of the batch, with its gradient with respect to
/// the latents. Centers receive no gradient.
pub fn contrastive_loss<T: Real>(
    batch: &LatentBatch<T>,
    centers: &CenterBank,
    delta: f64,
) -> Result<(f64, Tensor5<T>)> {
    if !centers.is_initialized() {
        return Err(Error::InsufficientData("contrastive loss needs initialized centers".into()));
    }
    if batch.clusters.len() != batch.len() {
        bail!(Shape, "{} cluster ids for {} latents", batch.clusters.len(), batch.len());
    }
    if batch.dim() != centers.dim() {
        bail!(Shape, "latent dim {} vs center dim {}", batch.dim(), centers.dim());
    }
    let m = centers.centers().len();
    let dim = batch.dim();
    let mut loss = 0.0;
    let mut grad = Tensor5::zeros(batch.latents.shape());
    let mut dist = alloc::vec![0.0f64; m];
    for i in 0..batch.len() {
        let e = batch.clusters[i];
        if e >= m {
            bail!(OutOfRange, "cluster id {e} for {m} centers");
        }
        let x = batch.row(i);
        for (j, d) in dist.iter_mut().enumerate() {
            *d = x.iter().zip(centers.center(j)).map(|(&a, &c)| {
                let d = a.as_f64() - c;
                d * d
            }).sum();
        }
        let own = dist[e];
        let denom = dist.iter().enumerate().filter(|&(j, _)| j != e).map(|(_, d)| d).sum::<f64>() + delta;
        loss += 0.5 * own / denom;
        // d/dx: (x − c_e)/D − own · Σ_{j≠e} (x − c_j) / D²
        let g = grad.sample_mut(i);
        let own_c = centers.center(e);
        for k in 0..dim {
            let xk = x[k].as_f64();
            let mut others = 0.0;
            for j in (0..m).filter(|&j| j != e) {
                others += xk - centers.center(j)[k];
            }
            g[k] = T::of((xk - own_c[k]) / denom - own * others / (denom * denom));
        }
    }
    Ok((loss, grad))
}

/// `L_rec + α·L_c`.
pub fn total_loss(rec: f64, contrastive: f64, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        bail!(OutOfRange, "alpha must be >= 0, got {alpha}");
    }
    Ok(rec + alpha * contrastive)
}
