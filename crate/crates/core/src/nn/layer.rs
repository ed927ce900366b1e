//! Layer sequences with a recorded tape for reverse-mode differentiation.

use alloc::vec::Vec;

use super::batchnorm::{BatchNorm3d, BatchNormCache};
use super::conv::Conv3d;
use super::pool::{maxpool3d, maxpool3d_backward, relu, relu_backward, upsample_nearest, upsample_nearest_backward};
use super::tensor::Tensor5;
use crate::error::{bail, Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv3d<T>),
    BatchNorm(BatchNorm3d<T>),
    Relu,
    MaxPool,
    Upsample,
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv3d",
            Layer::BatchNorm(_) => "batchnorm3d",
            Layer::Relu => "relu",
            Layer::MaxPool => "maxpool3d",
            Layer::Upsample => "upsample_nearest",
        }
    }

    /// Trainable tensors in declaration order.
    pub fn params(&self) -> Vec<&[T]> {
        match self {
            Layer::Conv(c) => alloc::vec![&c.weight[..], &c.bias[..]],
            Layer::BatchNorm(b) => alloc::vec![&b.gamma[..], &b.beta[..]],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Conv(c) => alloc::vec![&mut c.weight[..], &mut c.bias[..]],
            Layer::BatchNorm(b) => alloc::vec![&mut b.gamma[..], &mut b.beta[..]],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state that still has to be checkpointed.
    pub fn buffers(&self) -> Vec<&[T]> {
        match self {
            Layer::BatchNorm(b) => alloc::vec![&b.running_mean[..], &b.running_var[..]],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::BatchNorm(b) => alloc::vec![&mut b.running_mean[..], &mut b.running_var[..]],
            _ => Vec::new(),
        }
    }

    /// Parameters followed by buffers, the checkpoint order.
    pub fn state_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Conv(c) => alloc::vec![&mut c.weight[..], &mut c.bias[..]],
            Layer::BatchNorm(b) => alloc::vec![
                &mut b.gamma[..],
                &mut b.beta[..],
                &mut b.running_mean[..],
                &mut b.running_var[..]
            ],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
enum Saved<T> {
    Input(Tensor5<T>),
    Norm(BatchNormCache<T>),
    Output(Tensor5<T>),
    Argmax(Vec<u32>, [usize; 5]),
    Nothing,
}

/// Intermediates recorded by a training-mode forward pass, one per layer.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    saved: Vec<Saved<T>>,
}

impl<T> Tape<T> {
    pub fn len(&self) -> usize {
        self.saved.len()
    }

    pub fn is_empty(&self) -> bool {
        self.saved.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn buffers(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }

    /// Zeroed gradient buffers aligned with `params()`.
    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| alloc::vec![T::zero(); p.len()]).collect()
    }

    /// Training-mode forward: batchnorm uses batch statistics and updates its
    /// running estimates.
    pub fn forward_train(&mut self, x: Tensor5<T>) -> Result<(Tensor5<T>, Tape<T>)> {
        let mut saved = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for layer in &mut self.layers {
            h = match layer {
                Layer::Conv(c) => {
                    let y = c.forward(&h)?;
                    saved.push(Saved::Input(h));
                    y
                }
                Layer::BatchNorm(b) => {
                    let (y, cache) = b.forward_train(&h)?;
                    saved.push(Saved::Norm(cache));
                    y
                }
                Layer::Relu => {
                    let y = relu(&h);
                    saved.push(Saved::Output(y.clone()));
                    y
                }
                Layer::MaxPool => {
                    let (y, idx) = maxpool3d(&h)?;
                    saved.push(Saved::Argmax(idx, h.shape()));
                    y
                }
                Layer::Upsample => {
                    saved.push(Saved::Nothing);
                    upsample_nearest(&h)
                }
            };
        }
        Ok((h, Tape { saved }))
    }

    /// Inference-mode forward: batchnorm uses running statistics.
    pub fn forward_eval(&self, x: Tensor5<T>) -> Result<Tensor5<T>> {
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                Layer::Conv(c) => c.forward(&h)?,
                Layer::BatchNorm(b) => b.forward_eval(&h)?,
                Layer::Relu => relu(&h),
                Layer::MaxPool => maxpool3d(&h)?.0,
                Layer::Upsample => upsample_nearest(&h),
            };
        }
        Ok(h)
    }

    /// Back-propagates `dy` through the recorded tape, accumulating parameter
    /// gradients into `grads` (aligned with `params()`). The gradient with
    /// respect to the sequence input is returned when requested.
    pub fn backward(
        &self,
        tape: &Tape<T>,
        dy: Tensor5<T>,
        grads: &mut [Vec<T>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor5<T>>> {
        if tape.saved.len() != self.layers.len() {
            return Err(Error::MissingCache("tape does not match the layer sequence"));
        }
        let n_params: usize = self.layers.iter().map(|l| l.params().len()).sum();
        if grads.len() != n_params {
            bail!(Shape, "{} gradient buffers for {} parameters", grads.len(), n_params);
        }
        let mut slot = n_params;
        let mut g = dy;
        for (i, (layer, saved)) in self.layers.iter().zip(&tape.saved).enumerate().rev() {
            let first = i == 0;
            g = match (layer, saved) {
                (Layer::Conv(c), Saved::Input(x)) => {
                    slot -= 2;
                    let (dw, rest) = grads[slot..].split_at_mut(1);
                    match c.backward(x, &g, &mut dw[0], &mut rest[0], !first || need_input_grad)? {
                        Some(dx) => dx,
                        None => return Ok(None),
                    }
                }
                (Layer::BatchNorm(b), Saved::Norm(cache)) => {
                    slot -= 2;
                    let (dgamma, rest) = grads[slot..].split_at_mut(1);
                    b.backward(cache, &g, &mut dgamma[0], &mut rest[0])?
                }
                (Layer::Relu, Saved::Output(y)) => relu_backward(y, &g)?,
                (Layer::MaxPool, Saved::Argmax(idx, shape)) => maxpool3d_backward(&g, idx, *shape)?,
                (Layer::Upsample, Saved::Nothing) => upsample_nearest_backward(&g)?,
                _ => return Err(Error::MissingCache("tape entry does not match its layer")),
            };
        }
        Ok(need_input_grad.then_some(g))
    }
}
