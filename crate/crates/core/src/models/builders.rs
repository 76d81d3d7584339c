//! The four GAN networks, layer for layer.
//!
//! Every intermediate (transposed) convolution uses kernel 4, stride 2,
//! padding 1. The DCGAN generator's first layer (stride 1, padding 0) lifts
//! the `(z, 1, 1)` latent to 4x4 and the discriminator's last layer maps
//! 4x4 down to 1x1. The WGAN-GP networks follow a Keras layout, so their
//! batch-norm layers report running statistics in the parameter count.

use super::spec::{LayerSpec, NetworkSpec, Padding};

pub const DCGAN_Z_DIM: i64 = 100;
pub const WGAN_Z_DIM: i64 = 128;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const CRITIC_DROPOUT: f64 = 0.3;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

fn up(in_channels: i64, out_channels: i64, stride: i64, padding: Padding, bias: bool) -> LayerSpec {
    LayerSpec::ConvTranspose2d {
        in_channels,
        out_channels,
        kernel: 4,
        stride,
        padding,
        bias,
    }
}

fn down(in_channels: i64, out_channels: i64, stride: i64, padding: i64, bias: bool) -> LayerSpec {
    LayerSpec::Conv2d {
        in_channels,
        out_channels,
        kernel: 4,
        stride,
        padding: Padding::Fixed(padding),
        bias,
    }
}

fn bn(features: i64, count_running_stats: bool) -> LayerSpec {
    LayerSpec::BatchNorm {
        features,
        eps: BN_EPS,
        momentum: BN_MOMENTUM,
        count_running_stats,
    }
}

fn leaky() -> LayerSpec {
    LayerSpec::LeakyRelu { slope: LEAKY_SLOPE }
}

/// `(z, 1, 1)` -> `(3, 64, 64)` through five transposed-conv blocks and tanh.
pub fn build_dcgan_generator(z_dim: i64) -> NetworkSpec {
    assert!(z_dim >= 1, "latent dimension must be positive");
    let mut layers = vec![up(z_dim, 512, 1, Padding::Fixed(0), false), bn(512, false), LayerSpec::Relu];
    for (cin, cout) in [(512, 256), (256, 128), (128, 64)] {
        layers.extend([up(cin, cout, 2, Padding::Fixed(1), false), bn(cout, false), LayerSpec::Relu]);
    }
    layers.extend([up(64, 3, 2, Padding::Fixed(1), false), LayerSpec::Tanh]);
    NetworkSpec {
        name: "dcgan_generator".into(),
        input_shape: vec![z_dim, 1, 1],
        layers,
    }
}

/// `(3, 64, 64)` -> probability of "real", shape `(1,)`.
pub fn build_dcgan_discriminator() -> NetworkSpec {
    let mut layers = vec![down(3, 64, 2, 1, false), leaky()];
    for (cin, cout) in [(64, 128), (128, 256), (256, 512)] {
        layers.extend([down(cin, cout, 2, 1, false), bn(cout, false), leaky()]);
    }
    layers.extend([down(512, 1, 1, 0, false), LayerSpec::Sigmoid, LayerSpec::Flatten]);
    NetworkSpec {
        name: "dcgan_discriminator".into(),
        input_shape: vec![3, 64, 64],
        layers,
    }
}

/// `(z,)` -> `(3, 64, 64)`: dense projection to 8x8x512, three upsampling
/// stages (256, 128, 4 channels) and a stride-1 biased output layer.
pub fn build_wgan_generator(z_dim: i64) -> NetworkSpec {
    assert!(z_dim >= 1, "latent dimension must be positive");
    let mut layers = vec![
        LayerSpec::Dense {
            in_features: z_dim,
            out_features: 8 * 8 * 512,
            bias: true,
        },
        LayerSpec::Relu,
        LayerSpec::Reshape {
            shape: vec![512, 8, 8],
        },
    ];
    for (cin, cout) in [(512, 256), (256, 128), (128, 4)] {
        layers.extend([up(cin, cout, 2, Padding::Fixed(1), false), bn(cout, true), LayerSpec::Relu]);
    }
    layers.extend([up(4, 3, 1, Padding::Same, true), LayerSpec::Tanh]);
    NetworkSpec {
        name: "wgan_gp_generator".into(),
        input_shape: vec![z_dim],
        layers,
    }
}

/// `(3, 64, 64)` -> unbounded score `(1,)`; no output activation.
pub fn build_wgan_critic() -> NetworkSpec {
    build_wgan_critic_with_dropout(CRITIC_DROPOUT)
}

pub fn build_wgan_critic_with_dropout(rate: f64) -> NetworkSpec {
    NetworkSpec {
        name: "wgan_gp_critic".into(),
        input_shape: vec![3, 64, 64],
        layers: vec![
            down(3, 64, 2, 1, true),
            leaky(),
            down(64, 128, 2, 1, true),
            leaky(),
            down(128, 128, 2, 1, true),
            leaky(),
            LayerSpec::Flatten,
            LayerSpec::Dropout { rate },
            LayerSpec::Dense {
                in_features: 8192,
                out_features: 1,
                bias: false,
            },
        ],
    }
}
