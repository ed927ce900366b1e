//! Mini-batch training loops for both stages.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::centers::CenterBank;
use super::loss::{contrastive_loss, reconstruction_loss};
use super::network::{Bsen, LatentBatch};
use crate::error::{bail, Result};
use crate::nn::{AdamState, Tensor5};
use crate::real::Real;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Reconstruction only.
    Autoencoder,
    /// Reconstruction plus the weighted contrastive term.
    Contrastive,
}

pub enum Objective<'a> {
    Reconstruction,
    Joint {
        clusters: &'a [usize],
        centers: &'a mut CenterBank,
        alpha: f64,
        delta: f64,
        momentum: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Name of the shuffling sub-stream.
    pub stream: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample reconstruction error.
    pub reconstruction: f64,
    /// Mean per-sample contrastive term (0 for the autoencoder stage).
    pub contrastive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub stage: Stage,
    pub epochs: Vec<EpochStats>,
    pub steps: u64,
}

impl TrainReport {
    /// Whether the last epoch's objective is below the first one's.
    pub fn improved(&self, alpha: f64) -> bool {
        match (self.epochs.first(), self.epochs.last()) {
            (Some(a), Some(b)) => {
                b.reconstruction + alpha * b.contrastive < a.reconstruction + alpha * a.contrastive
            }
            _ => false,
        }
    }
}

/// Runs `opts.epochs` shuffled passes over `samples` with Adam.
pub fn fit<T: Real, S: AsRef<[T]>>(
    model: &mut Bsen<T>,
    samples: &[S],
    mut objective: Objective<'_>,
    opts: &FitOptions,
) -> Result<TrainReport> {
    if samples.is_empty() {
        bail!(InsufficientData, "empty training set");
    }
    if opts.batch_size == 0 {
        bail!(OutOfRange, "batch size must be positive");
    }
    let per_sample = model.input_shape(1).iter().product::<usize>();
    if let Some(bad) = samples.iter().position(|s| s.as_ref().len() != per_sample) {
        bail!(Shape, "training sample {bad} has {} values, model expects {per_sample}", samples[bad].as_ref().len());
    }
    if let Objective::Joint { clusters, centers, .. } = &objective {
        if clusters.len() != samples.len() {
            bail!(Shape, "{} cluster ids for {} samples", clusters.len(), samples.len());
        }
        if centers.dim() != model.config.latent_dim() {
            bail!(Shape, "center dim {} vs latent dim {}", centers.dim(), model.config.latent_dim());
        }
    }
    let stage = match objective {
        Objective::Reconstruction => Stage::Autoencoder,
        Objective::Joint { .. } => Stage::Contrastive,
    };

    let mut shuffle = rng::stream(opts.seed, &opts.stream);
    let mut adam = AdamState::new(T::of(opts.lr), &model.param_lengths());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport { stage, epochs: Vec::with_capacity(opts.epochs), steps: 0 };

    for epoch in 0..opts.epochs {
        order.shuffle(&mut shuffle);
        let (mut rec_sum, mut con_sum) = (0.0, 0.0);
        for chunk in order.chunks(opts.batch_size) {
            let mut x = Tensor5::zeros(model.input_shape(chunk.len()));
            for (b, &i) in chunk.iter().enumerate() {
                x.sample_mut(b).copy_from_slice(samples[i].as_ref());
            }
            let (latent, enc_tape) = model.encoder.forward_train(x.clone())?;
            let (recon, dec_tape) = model.decoder.forward_train(latent.clone())?;
            let (rec, d_recon) = reconstruction_loss(&recon, &x)?;
            rec_sum += rec * chunk.len() as f64;

            let mut dec_grads = model.decoder.zero_grads();
            let mut d_latent = model
                .decoder
                .backward(&dec_tape, d_recon, &mut dec_grads, true)?
                .expect("input gradient requested");

            let mut assigned = None;
            if let Objective::Joint { clusters, centers, alpha, delta, .. } = &objective {
                let batch = LatentBatch { latents: latent, clusters: chunk.iter().map(|&i| clusters[i]).collect() };
                let (lc, d_lc) = contrastive_loss(&batch, centers, *delta)?;
                con_sum += lc;
                let a = T::of(*alpha);
                for (g, &c) in d_latent.data_mut().iter_mut().zip(d_lc.data()) {
                    *g += a * c;
                }
                assigned = Some(batch);
            }

            let mut enc_grads = model.encoder.zero_grads();
            model.encoder.backward(&enc_tape, d_latent, &mut enc_grads, false)?;
            enc_grads.extend(dec_grads);
            adam.step(&mut model.params_mut(), &enc_grads)?;
            report.steps += 1;

            if let (Objective::Joint { centers, momentum, .. }, Some(batch)) = (&mut objective, assigned) {
                centers.update(&batch, *momentum)?;
            }
        }
        let n = samples.len() as f64;
        report.epochs.push(EpochStats { epoch, reconstruction: rec_sum / n, contrastive: con_sum / n });
    }
    Ok(report)
}

/// Stage 1: reconstruction-only training at `lr_stage1`.
pub fn train_stage1<T: Real, S: AsRef<[T]>>(model: &mut Bsen<T>, samples: &[S]) -> Result<TrainReport> {
    let opts = FitOptions {
        lr: model.config.lr_stage1,
        epochs: model.config.epochs,
        batch_size: model.config.batch_size,
        seed: model.config.seed,
        stream: String::from("shuffle/stage1"),
    };
    fit(model, samples, Objective::Reconstruction, &opts)
}

/// Stage 2: joint training of the whole network under
/// `L_rec + α·L_c` at `lr_stage2`. Centers start at the per-cluster means of
/// the incoming model's latents and follow a per-batch moving average.
pub fn train_stage2<T: Real, S: AsRef<[T]>>(
    model: &mut Bsen<T>,
    samples: &[S],
    clusters: &[usize],
) -> Result<(CenterBank, TrainReport)> {
    let mut latents = model.encode_samples(samples)?;
    latents.clusters = clusters.to_vec();
    let mut centers = CenterBank::from_cluster_means(&latents)?;
    let opts = FitOptions {
        lr: model.config.lr_stage2,
        epochs: model.config.epochs,
        batch_size: model.config.batch_size,
        seed: model.config.seed,
        stream: String::from("shuffle/stage2"),
    };
    let objective = Objective::Joint {
        clusters,
        centers: &mut centers,
        alpha: model.config.alpha,
        delta: model.config.delta,
        momentum: model.config.center_momentum,
    };
    let report = fit(model, samples, objective, &opts)?;
    Ok((centers, report))
}

impl<T: Real> Bsen<T> {
    /// Inference-mode latents of many samples, encoded in chunks of the batch size.
    pub fn encode_samples<S: AsRef<[T]>>(&self, samples: &[S]) -> Result<LatentBatch<T>> {
        if samples.is_empty() {
            bail!(InsufficientData, "no samples to encode");
        }
        let chunk = self.config.batch_size.max(1);
        let dim = self.config.latent_dim();
        let mut out = Vec::with_capacity(samples.len() * dim);
        for part in samples.chunks(chunk) {
            let mut x = Tensor5::zeros(self.input_shape(part.len()));
            for (b, s) in part.iter().enumerate() {
                let s = s.as_ref();
                if s.len() != x.sample_len() {
                    bail!(Shape, "sample has {} values, model expects {}", s.len(), x.sample_len());
                }
                x.sample_mut(b).copy_from_slice(s);
            }
            out.extend_from_slice(self.encode(&x)?.latents.data());
        }
        Ok(LatentBatch::unassigned(Tensor5::from_vec(self.latent_shape(samples.len()), out)?))
    }

    /// Mean per-sample contrastive loss of the inference-mode latents.
    pub fn mean_contrastive_loss<S: AsRef<[T]>>(
        &self,
        samples: &[S],
        clusters: &[usize],
        centers: &CenterBank,
    ) -> Result<f64> {
        let mut latents = self.encode_samples(samples)?;
        latents.clusters = clusters.to_vec();
        let (l, _) = contrastive_loss(&latents, centers, self.config.delta)?;
        Ok(l / samples.len() as f64)
    }
}
