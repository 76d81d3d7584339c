use rand::{Rng, RngCore};
use tch::{Kind, Tensor};

use super::spec::{LayerSpec, NetworkSpec, Padding};
use crate::error::{Error, Result};

/// Forward-pass mode. Training mode uses batch statistics, updates the
/// running averages and samples dropout masks from the given stream.
pub enum Mode<'a> {
    Train(&'a mut dyn RngCore),
    Eval,
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

enum LayerState {
    Affine {
        weight: Tensor,
        bias: Option<Tensor>,
    },
    Norm {
        weight: Tensor,
        bias: Tensor,
        running_mean: Tensor,
        running_var: Tensor,
    },
    Stateless,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorRole {
    /// Updated by the optimizer.
    Parameter,
    /// Running statistics.
    Buffer,
}

/// An instantiated [`NetworkSpec`] holding raw CPU tensors.
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<LayerState>,
}

fn param(shape: &[i64]) -> Tensor {
    Tensor::zeros(shape, (Kind::Float, tch::Device::Cpu)).set_requires_grad(true)
}

fn buffer(shape: &[i64], fill: f64) -> Tensor {
    Tensor::full(shape, fill, (Kind::Float, tch::Device::Cpu))
}

impl Network {
    /// Allocates every tensor (weights zero, variances one). Callers
    /// normally follow with [`super::init_weights`].
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        spec.output_shapes()?;
        let layers = spec
            .layers
            .iter()
            .map(|layer| match *layer {
                LayerSpec::ConvTranspose2d {
                    in_channels,
                    out_channels,
                    kernel,
                    bias,
                    ..
                } => LayerState::Affine {
                    weight: param(&[in_channels, out_channels, kernel, kernel]),
                    bias: bias.then(|| param(&[out_channels])),
                },
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    bias,
                    ..
                } => LayerState::Affine {
                    weight: param(&[out_channels, in_channels, kernel, kernel]),
                    bias: bias.then(|| param(&[out_channels])),
                },
                LayerSpec::Dense {
                    in_features,
                    out_features,
                    bias,
                } => LayerState::Affine {
                    weight: param(&[out_features, in_features]),
                    bias: bias.then(|| param(&[out_features])),
                },
                LayerSpec::BatchNorm { features, .. } => LayerState::Norm {
                    weight: buffer(&[features], 1.0).set_requires_grad(true),
                    bias: param(&[features]),
                    running_mean: buffer(&[features], 0.0),
                    running_var: buffer(&[features], 1.0),
                },
                _ => LayerState::Stateless,
            })
            .collect();
        Ok(Network {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Every tensor with a stable name, in declaration order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor, TensorRole)> {
        let mut out = Vec::new();
        for (i, state) in self.layers.iter().enumerate() {
            match state {
                LayerState::Affine { weight, bias } => {
                    out.push((format!("{i}.weight"), weight, TensorRole::Parameter));
                    if let Some(b) = bias {
                        out.push((format!("{i}.bias"), b, TensorRole::Parameter));
                    }
                }
                LayerState::Norm {
                    weight,
                    bias,
                    running_mean,
                    running_var,
                } => {
                    out.push((format!("{i}.weight"), weight, TensorRole::Parameter));
                    out.push((format!("{i}.bias"), bias, TensorRole::Parameter));
                    out.push((format!("{i}.running_mean"), running_mean, TensorRole::Buffer));
                    out.push((format!("{i}.running_var"), running_var, TensorRole::Buffer));
                }
                LayerState::Stateless => {}
            }
        }
        out
    }

    /// Trainable tensors in declaration order.
    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_tensors()
            .into_iter()
            .filter(|(_, _, role)| *role == TensorRole::Parameter)
            .map(|(_, t, _)| t.shallow_clone())
            .collect()
    }

    /// Number of stored scalars (parameters and running statistics).
    pub fn numel(&self) -> u64 {
        self.named_tensors()
            .iter()
            .map(|(_, t, _)| t.numel() as u64)
            .sum()
    }

    pub fn set_requires_grad(&self, on: bool) {
        for p in self.parameters() {
            let _ = p.set_requires_grad(on);
        }
    }

    pub fn zero_grad(&self) {
        for mut p in self.parameters() {
            p.zero_grad();
        }
    }

    /// Overwrites a named tensor in place.
    pub fn copy_named(&self, name: &str, value: &Tensor) -> Result<()> {
        let Some((_, target, _)) = self.named_tensors().into_iter().find(|(n, _, _)| n == name) else {
            return Err(Error::Checkpoint(format!(
                "{} has no tensor named {name}",
                self.spec.name
            )));
        };
        if target.size() != value.size() {
            return Err(Error::Shape(format!(
                "{name}: expected {:?}, got {:?}",
                target.size(),
                value.size()
            )));
        }
        tch::no_grad(|| target.shallow_clone().copy_(value));
        Ok(())
    }

    pub fn forward(&self, x: &Tensor, mut mode: Mode<'_>) -> Result<Tensor> {
        let size = x.size();
        if size.len() != self.spec.input_shape.len() + 1 || size[1..] != self.spec.input_shape[..] {
            return Err(Error::Shape(format!(
                "{} expects input (N, {}), got {size:?}",
                self.spec.name,
                self.spec
                    .input_shape
                    .iter()
                    .map(i64::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        let train = mode.is_train();
        let mut h = x.shallow_clone();
        for (layer, state) in self.spec.layers.iter().zip(&self.layers) {
            h = match (layer, state) {
                (
                    LayerSpec::ConvTranspose2d {
                        kernel,
                        stride,
                        padding,
                        ..
                    },
                    LayerState::Affine { weight, bias },
                ) => conv_transpose(&h, weight, bias.as_ref(), *kernel, *stride, *padding),
                (
                    LayerSpec::Conv2d {
                        kernel,
                        stride,
                        padding,
                        ..
                    },
                    LayerState::Affine { weight, bias },
                ) => conv(&h, weight, bias.as_ref(), *kernel, *stride, *padding),
                (LayerSpec::Dense { .. }, LayerState::Affine { weight, bias }) => {
                    h.linear(weight, bias.as_ref())
                }
                (
                    LayerSpec::BatchNorm { eps, momentum, .. },
                    LayerState::Norm {
                        weight,
                        bias,
                        running_mean,
                        running_var,
                    },
                ) => h.batch_norm(
                    Some(weight),
                    Some(bias),
                    Some(running_mean),
                    Some(running_var),
                    train,
                    *momentum,
                    *eps,
                    false,
                ),
                (LayerSpec::Relu, _) => h.relu(),
                (LayerSpec::LeakyRelu { slope }, _) => h.relu() - (-&h).relu() * *slope,
                (LayerSpec::Tanh, _) => h.tanh(),
                (LayerSpec::Sigmoid, _) => h.sigmoid(),
                (LayerSpec::Flatten, _) => h.flatten(1, -1),
                (LayerSpec::Reshape { shape }, _) => {
                    let mut full = vec![h.size()[0]];
                    full.extend_from_slice(shape);
                    h.reshape(full)
                }
                (LayerSpec::Dropout { rate }, _) => match &mut mode {
                    Mode::Train(rng) if *rate > 0.0 => {
                        let mask = dropout_mask(&h.size(), *rate, &mut **rng);
                        h * mask
                    }
                    _ => h,
                },
                _ => unreachable!("layer state always matches its spec"),
            };
        }
        Ok(h)
    }
}

/// Inverted-dropout mask: zero with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask(shape: &[i64], rate: f64, rng: &mut dyn RngCore) -> Tensor {
    let n: i64 = shape.iter().product();
    let keep = (1.0 / (1.0 - rate)) as f32;
    let values: Vec<f32> = (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Tensor::from_slice(&values).reshape(shape)
}

fn conv(x: &Tensor, w: &Tensor, b: Option<&Tensor>, kernel: i64, stride: i64, padding: Padding) -> Tensor {
    match padding {
        Padding::Fixed(p) => x.conv2d(w, b, [stride, stride], [p, p], [1, 1], 1),
        Padding::Same => {
            let size = x.size();
            let pad = |n: i64| {
                let out = (n + stride - 1) / stride;
                let total = ((out - 1) * stride + kernel - n).max(0);
                (total / 2, total - total / 2)
            };
            let (top, bottom) = pad(size[2]);
            let (left, right) = pad(size[3]);
            x.constant_pad_nd([left, right, top, bottom])
                .conv2d(w, b, [stride, stride], [0, 0], [1, 1], 1)
        }
    }
}

fn conv_transpose(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    kernel: i64,
    stride: i64,
    padding: Padding,
) -> Tensor {
    match padding {
        Padding::Fixed(p) => x.conv_transpose2d(w, b, [stride, stride], [p, p], [0, 0], 1, [1, 1]),
        Padding::Same => {
            let size = x.size();
            let full = x.conv_transpose2d(w, b, [stride, stride], [0, 0], [0, 0], 1, [1, 1]);
            let crop = ((kernel - stride).max(0)) / 2;
            full.narrow(2, crop, size[2] * stride)
                .narrow(3, crop, size[3] * stride)
        }
    }
}
