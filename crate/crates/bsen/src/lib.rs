//! File formats, run configuration and the `bsen` command-line pipeline
//! around [`bsen_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod selfcheck;
pub mod tables;
pub mod volume_io;

pub use error::{Error, Result};
