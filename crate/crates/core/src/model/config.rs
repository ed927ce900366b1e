use crate::error::{bail, Result};
use crate::volume::Dims;

/// Architecture and optimization settings. Defaults are the published ones
/// for the 64x80x64 analysis grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BsenConfig {
    /// Padded input grid; every axis must be divisible by 8.
    pub input_dims: Dims,
    /// Encoder channels; the decoder mirrors them.
    pub channels: [usize; 3],
    /// Weight of the contrastive term in the total loss.
    pub alpha: f64,
    /// Denominator guard of the contrastive loss.
    pub delta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    /// EMA weight of the batch mean when updating cluster centers.
    pub center_momentum: f64,
    pub seed: u64,
}

impl Default for BsenConfig {
    fn default() -> Self {
        Self {
            input_dims: [64, 80, 64],
            channels: [32, 16, 8],
            alpha: 0.5,
            delta: 1.0,
            batch_size: 32,
            epochs: 30,
            lr_stage1: 0.0001,
            lr_stage2: 0.0005,
            center_momentum: 0.5,
            seed: 0,
        }
    }
}

impl BsenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dims.iter().any(|&d| d == 0 || d % 8 != 0) {
            bail!(Shape, "input dims {:?} must be positive multiples of 8", self.input_dims);
        }
        if self.channels.iter().any(|&c| c == 0) {
            bail!(OutOfRange, "channel counts must be positive, got {:?}", self.channels);
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            bail!(OutOfRange, "alpha must be >= 0, got {}", self.alpha);
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            bail!(OutOfRange, "delta must be > 0, got {}", self.delta);
        }
        if self.batch_size == 0 {
            bail!(OutOfRange, "batch size must be positive");
        }
        for (name, lr) in [("lr_stage1", self.lr_stage1), ("lr_stage2", self.lr_stage2)] {
            if !(lr > 0.0 && lr.is_finite()) {
                bail!(OutOfRange, "{name} must be > 0, got {lr}");
            }
        }
        if !(0.0..=1.0).contains(&self.center_momentum) {
            bail!(OutOfRange, "center momentum must lie in [0, 1], got {}", self.center_momentum);
        }
        Ok(())
    }

    /// Spatial dims of the bottleneck (three 2x poolings).
    pub fn latent_spatial(&self) -> Dims {
        [self.input_dims[0] / 8, self.input_dims[1] / 8, self.input_dims[2] / 8]
    }

    pub fn latent_channels(&self) -> usize {
        self.channels[2]
    }

    /// Flattened bottleneck length per sample.
    pub fn latent_dim(&self) -> usize {
        let [x, y, z] = self.latent_spatial();
        self.latent_channels() * x * y * z
    }

    /// Length of the channel-pooled feature vector.
    pub fn feature_dim(&self) -> usize {
        let [x, y, z] = self.latent_spatial();
        x * y * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottleneck_arithmetic() {
        let mut c = BsenConfig::default();
        assert_eq!(c.latent_dim(), 5120);
        assert_eq!(c.feature_dim(), 640);
        c.input_dims = [64, 72, 64];
        assert_eq!(c.latent_dim(), 4608);
        assert_eq!(c.feature_dim(), 576);
        c.input_dims = [16, 24, 16];
        assert_eq!(c.latent_dim(), 96);
    }

    #[test]
    fn validation() {
        assert!(BsenConfig::default().validate().is_ok());
        let bad = BsenConfig { input_dims: [61, 73, 61], ..BsenConfig::default() };
        assert!(bad.validate().is_err());
        assert!(BsenConfig { alpha: -1.0, ..BsenConfig::default() }.validate().is_err());
        assert!(BsenConfig { delta: 0.0, ..BsenConfig::default() }.validate().is_err());
    }
}
