//! GAN architectures: declarative specs, instantiation, init, checkpoints.

mod builders;
mod checkpoint;
mod init;
mod network;
mod spec;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use builders::{
    build_dcgan_discriminator, build_dcgan_generator, build_wgan_critic,
    build_wgan_critic_with_dropout, build_wgan_generator, BN_EPS, BN_MOMENTUM, CRITIC_DROPOUT,
    DCGAN_Z_DIM, LEAKY_SLOPE, WGAN_Z_DIM,
};
pub use checkpoint::{Checkpoint, CheckpointMeta, StoredTensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use init::{init_weights, normal_values, INIT_STD};
pub use network::{dropout_mask, Mode, Network, TensorRole};
pub use spec::{param_count, LayerSpec, NetworkSpec, Padding, ParamCount};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GanKind {
    #[serde(rename = "dcgan")]
    Dcgan,
    #[serde(rename = "wgan-gp")]
    WganGp,
}

impl GanKind {
    pub const ALL: [GanKind; 2] = [GanKind::Dcgan, GanKind::WganGp];

    pub fn as_str(self) -> &'static str {
        match self {
            GanKind::Dcgan => "dcgan",
            GanKind::WganGp => "wgan-gp",
        }
    }

    pub fn default_z_dim(self) -> i64 {
        match self {
            GanKind::Dcgan => DCGAN_Z_DIM,
            GanKind::WganGp => WGAN_Z_DIM,
        }
    }

    /// Name of the second network in checkpoints and logs.
    pub fn adversary_role(self) -> &'static str {
        match self {
            GanKind::Dcgan => "discriminator",
            GanKind::WganGp => "critic",
        }
    }

    pub fn generator_spec(self, z_dim: i64) -> NetworkSpec {
        match self {
            GanKind::Dcgan => build_dcgan_generator(z_dim),
            GanKind::WganGp => build_wgan_generator(z_dim),
        }
    }

    pub fn adversary_spec(self, critic_dropout: f64) -> NetworkSpec {
        match self {
            GanKind::Dcgan => build_dcgan_discriminator(),
            GanKind::WganGp => build_wgan_critic_with_dropout(critic_dropout),
        }
    }

    /// Latent batch shape for `n` samples.
    pub fn latent_shape(self, n: i64, z_dim: i64) -> Vec<i64> {
        match self {
            GanKind::Dcgan => vec![n, z_dim, 1, 1],
            GanKind::WganGp => vec![n, z_dim],
        }
    }
}

impl fmt::Display for GanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GanKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dcgan" => Ok(GanKind::Dcgan),
            "wgan-gp" | "wgan_gp" | "wgangp" => Ok(GanKind::WganGp),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown GAN kind {other:?} (expected dcgan or wgan-gp)"
            ))),
        }
    }
}
