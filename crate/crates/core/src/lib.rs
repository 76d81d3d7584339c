//! Satellite-image augmentation with GANs: data pipeline, DCGAN and
//! WGAN-GP models and losses, GAN training, transfer-learning classifiers
//! and the ablation harness.

pub mod classifier;
pub mod data;
mod error;
pub mod harness;
pub mod losses;
pub mod models;
pub mod optim;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use models::GanKind;
