//! Minimal differentiable core: the five layer kinds of the autoencoder,
//! reverse-mode gradients through a recorded tape, and Adam.

mod adam;
mod batchnorm;
mod conv;
pub mod gradcheck;
mod layer;
mod pool;
mod tensor;

pub use adam::AdamState;
pub use batchnorm::BatchNorm3d;
pub use conv::Conv3d;
pub use layer::{Layer, Sequential, Tape};
pub use pool::{maxpool3d, maxpool3d_backward, relu, relu_backward, upsample_nearest, upsample_nearest_backward};
pub use tensor::Tensor5;
