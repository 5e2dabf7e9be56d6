//! Conditional noise-contrastive estimation of mutual information with
//! ring-restricted negative sampling.

pub mod annealing;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod estimators;
pub mod gaussian_toy;
pub mod instdisc;
pub mod numerics;
pub mod samplers;

pub use error::{Error, Result};
