//! Numerical core of the behavior-score-embedded encoder network (BSEN).
//!
//! A 3D convolutional autoencoder whose bottleneck is pulled toward
//! per-cluster centers derived from binarized psychological test scores,
//! together with everything downstream of it: bottleneck feature pooling,
//! PCA/ICA baselines, one-vs-rest linear SVMs with Platt calibration,
//! late fusion, stratified cross-validation, UAR scoring and the
//! per-region t-test statistics, plus the cross-validated experiment driver
//! and a synthetic cohort generator.
//!
//! The crate is `no_std` (with `alloc`) so that it carries no IO. File
//! formats and the command line live in the `bsen` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classify;
pub mod cohort;
pub mod error;
pub mod experiment;
pub mod features;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod real;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use real::Real;
