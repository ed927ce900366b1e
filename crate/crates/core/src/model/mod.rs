//! The behavior-score-embedded encoder network: architecture, the
//! reconstruction and contrastive-center losses, center maintenance and
//! the two-stage training procedure.

mod behavior;
mod centers;
mod config;
mod loss;
mod network;
mod train;

pub use behavior::{binarize_behavior, BehaviorTest, Cluster, CLUSTERS};
pub use centers::CenterBank;
pub use config::BsenConfig;
pub use loss::{contrastive_loss, reconstruction_loss, total_loss};
pub use network::{Bsen, LatentBatch, NamedTensor};
pub use train::{
    fit, train_stage1, train_stage2, EpochStats, FitOptions, Objective, Stage, TrainReport,
};
