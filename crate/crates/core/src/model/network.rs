use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::BsenConfig;
use crate::error::{bail, Result};
use crate::nn::{BatchNorm3d, Conv3d, Layer, Sequential, Tensor5};
use crate::real::Real;
use crate::rng;

/// Encoder-decoder pair. The encoder is three `conv → batchnorm → relu →
/// maxpool` blocks; the decoder mirrors it with `upsample → conv →
/// batchnorm → relu` blocks, ending in a single-channel conv and a ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Bsen<T> {
    pub config: BsenConfig,
    pub encoder: Sequential<T>,
    pub decoder: Sequential<T>,
}

/// Bottleneck activations, one flattened `channels x (n/8)^3` row per sample,
/// optionally with each sample's behavior cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch<T> {
    pub latents: Tensor5<T>,
    pub clusters: Vec<usize>,
}

impl<T: Real> LatentBatch<T> {
    pub fn unassigned(latents: Tensor5<T>) -> Self {
        Self { latents, clusters: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.latents.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.latents.sample_len()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.latents.sample(i)
    }
}

/// A parameter or buffer tensor with its checkpoint name and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

impl<T: Real> Bsen<T> {
    pub fn build(config: &BsenConfig) -> Result<Self> {
        config.validate()?;
        let mut init = rng::stream(config.seed, "init");
        let [c1, c2, c3] = config.channels;
        let mut encoder = Vec::new();
        let mut prev = 1;
        for c in [c1, c2, c3] {
            encoder.push(Layer::Conv(Conv3d::init(prev, c, &mut init)));
            encoder.push(Layer::BatchNorm(BatchNorm3d::new(c)));
            encoder.push(Layer::Relu);
            encoder.push(Layer::MaxPool);
            prev = c;
        }
        let mut decoder = Vec::new();
        for c in [c2, c1] {
            decoder.push(Layer::Upsample);
            decoder.push(Layer::Conv(Conv3d::init(prev, c, &mut init)));
            decoder.push(Layer::BatchNorm(BatchNorm3d::new(c)));
            decoder.push(Layer::Relu);
            prev = c;
        }
        decoder.push(Layer::Upsample);
        decoder.push(Layer::Conv(Conv3d::init(prev, 1, &mut init)));
        decoder.push(Layer::Relu);
        Ok(Self {
            config: config.clone(),
            encoder: Sequential::new(encoder),
            decoder: Sequential::new(decoder),
        })
    }

    pub fn input_shape(&self, batch: usize) -> [usize; 5] {
        let [x, y, z] = self.config.input_dims;
        [batch, 1, x, y, z]
    }

    pub fn latent_shape(&self, batch: usize) -> [usize; 5] {
        let [x, y, z] = self.config.latent_spatial();
        [batch, self.config.latent_channels(), x, y, z]
    }

    pub fn check_input(&self, x: &Tensor5<T>) -> Result<()> {
        if x.shape()[1..] != self.input_shape(1)[1..] {
            bail!(
                Shape,
                "model expects inputs of shape {:?}, got {:?}",
                &self.input_shape(1)[1..],
                &x.shape()[1..]
            );
        }
        Ok(())
    }

    /// Inference-mode bottleneck activations.
    pub fn encode(&self, x: &Tensor5<T>) -> Result<LatentBatch<T>> {
        self.check_input(x)?;
        Ok(LatentBatch::unassigned(self.encoder.forward_eval(x.clone())?))
    }

    /// Inference-mode reconstruction from bottleneck activations.
    pub fn decode(&self, latent: &Tensor5<T>) -> Result<Tensor5<T>> {
        let want = self.latent_shape(latent.batch());
        if latent.data().len() != want.iter().product::<usize>() {
            bail!(Shape, "latent of {} values cannot be reshaped to {:?}", latent.data().len(), want);
        }
        let z = latent.clone().reshaped(want)?;
        self.decoder.forward_eval(z)
    }

    pub fn reconstruct(&self, x: &Tensor5<T>) -> Result<Tensor5<T>> {
        let z = self.encode(x)?;
        self.decode(&z.latents)
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }

    pub fn param_lengths(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.len()).collect()
    }

    /// Every parameter and buffer in checkpoint order: per layer, encoder
    /// first, `weight, bias` for convs and `gamma, beta, running_mean,
    /// running_var` for batchnorms.
    pub fn named_tensors(&self) -> Vec<NamedTensor<'_, T>> {
        let mut out = Vec::new();
        for (part, seq) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, layer) in seq.layers.iter().enumerate() {
                match layer {
                    Layer::Conv(c) => {
                        let wshape = alloc::vec![c.out_channels, c.in_channels, 3, 3, 3];
                        out.push(NamedTensor { name: format!("{part}.{i}.weight"), shape: wshape, data: &c.weight });
                        out.push(NamedTensor {
                            name: format!("{part}.{i}.bias"),
                            shape: alloc::vec![c.out_channels],
                            data: &c.bias,
                        });
                    }
                    Layer::BatchNorm(b) => {
                        let n = alloc::vec![b.channels()];
                        for (name, data) in [
                            ("gamma", &b.gamma),
                            ("beta", &b.beta),
                            ("running_mean", &b.running_mean),
                            ("running_var", &b.running_var),
                        ] {
                            out.push(NamedTensor { name: format!("{part}.{i}.{name}"), shape: n.clone(), data });
                        }
                    }
                    _ => {}
                }
            }
        }
        out
    }

    /// Overwrites all tensors in `named_tensors` order from one flat buffer.
    pub fn load_flat(&mut self, flat: &[T]) -> Result<()> {
        let total: usize = self.named_tensors().iter().map(|t| t.data.len()).sum();
        if flat.len() != total {
            bail!(Shape, "model holds {total} values, payload has {}", flat.len());
        }
        let mut off = 0;
        for seq in [&mut self.encoder, &mut self.decoder] {
            for layer in seq.layers.iter_mut() {
                for s in layer.state_mut() {
                    s.copy_from_slice(&flat[off..off + s.len()]);
                    off += s.len();
                }
            }
        }
        Ok(())
    }
}
