use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Symmetric zero padding (convolution) or cropping (transposed convolution).
    Fixed(i64),
    /// Output spatial size is `input * stride` (transposed) or
    /// `ceil(input / stride)` (convolution); any odd remainder goes to the end.
    Same,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    ConvTranspose2d {
        in_channels: i64,
        out_channels: i64,
        kernel: i64,
        stride: i64,
        padding: Padding,
        bias: bool,
    },
    Conv2d {
        in_channels: i64,
        out_channels: i64,
        kernel: i64,
        stride: i64,
        padding: Padding,
        bias: bool,
    },
    Dense {
        in_features: i64,
        out_features: i64,
        bias: bool,
    },
    BatchNorm {
        features: i64,
        eps: f64,
        momentum: f64,
        /// Count running mean/variance in the parameter total, as Keras
        /// summaries do; PyTorch summaries count only scale and shift.
        count_running_stats: bool,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Tanh,
    Sigmoid,
    Flatten,
    Reshape {
        shape: Vec<i64>,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn type_name(&self) -> &'static str {
        match self {
            LayerSpec::ConvTranspose2d { .. } => "ConvTranspose2d",
            LayerSpec::Conv2d { .. } => "Conv2d",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::BatchNorm { .. } => "BatchNorm2d",
            LayerSpec::Relu => "ReLU",
            LayerSpec::LeakyRelu { .. } => "LeakyReLU",
            LayerSpec::Tanh => "Tanh",
            LayerSpec::Sigmoid => "Sigmoid",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Reshape { .. } => "Reshape",
            LayerSpec::Dropout { .. } => "Dropout",
        }
    }

    /// Parameter count as reported by the framework's model summary.
    pub fn param_count(&self) -> u64 {
        match *self {
            LayerSpec::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                bias,
                ..
            }
            | LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                bias,
                ..
            } => (in_channels * out_channels * kernel * kernel + if bias { out_channels } else { 0 }) as u64,
            LayerSpec::Dense {
                in_features,
                out_features,
                bias,
            } => (in_features * out_features + if bias { out_features } else { 0 }) as u64,
            LayerSpec::BatchNorm {
                features,
                count_running_stats,
                ..
            } => (features * if count_running_stats { 4 } else { 2 }) as u64,
            _ => 0,
        }
    }

    /// Parameters updated by gradient descent (batch-norm statistics excluded).
    pub fn trainable_count(&self) -> u64 {
        match *self {
            LayerSpec::BatchNorm { features, .. } => 2 * features as u64,
            _ => self.param_count(),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[i64]) -> Result<Vec<i64>> {
        let fail = |what: String| Err(Error::Shape(format!("{}: {what}", self.type_name())));
        match self {
            LayerSpec::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let [c, h, w] = input else {
                    return fail(format!("expected (C, H, W), got {input:?}"));
                };
                if c != in_channels {
                    return fail(format!("expected {in_channels} channels, got {c}"));
                }
                let out = |n: i64| match padding {
                    Padding::Fixed(p) => (n - 1) * stride - 2 * p + kernel,
                    Padding::Same => n * stride,
                };
                Ok(vec![*out_channels, out(*h), out(*w)])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let [c, h, w] = input else {
                    return fail(format!("expected (C, H, W), got {input:?}"));
                };
                if c != in_channels {
                    return fail(format!("expected {in_channels} channels, got {c}"));
                }
                let out = |n: i64| match padding {
                    Padding::Fixed(p) => (n + 2 * p - kernel) / stride + 1,
                    Padding::Same => (n + stride - 1) / stride,
                };
                let (oh, ow) = (out(*h), out(*w));
                if oh < 1 || ow < 1 {
                    return fail(format!("input {input:?} too small for kernel {kernel}"));
                }
                Ok(vec![*out_channels, oh, ow])
            }
            LayerSpec::Dense {
                in_features,
                out_features,
                ..
            } => match input {
                [f] if f == in_features => Ok(vec![*out_features]),
                _ => fail(format!("expected ({in_features},), got {input:?}")),
            },
            LayerSpec::BatchNorm { features, .. } => match input.first() {
                Some(c) if c == features => Ok(input.to_vec()),
                _ => fail(format!("expected {features} channels, got {input:?}")),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<i64>() != input.iter().product::<i64>() {
                    return fail(format!("cannot reshape {input:?} to {shape:?}"));
                }
                Ok(shape.clone())
            }
            LayerSpec::Relu
            | LayerSpec::LeakyRelu { .. }
            | LayerSpec::Tanh
            | LayerSpec::Sigmoid
            | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
        }
    }
}

/// Declarative, layer-by-layer network description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// Per-sample input shape (no batch dimension).
    pub input_shape: Vec<i64>,
    pub layers: Vec<LayerSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub per_layer: Vec<u64>,
    pub total: u64,
}

/// Analytic parameter counts; no instantiation needed.
pub fn param_count(spec: &NetworkSpec) -> ParamCount {
    let per_layer: Vec<u64> = spec.layers.iter().map(LayerSpec::param_count).collect();
    let total = per_layer.iter().sum();
    ParamCount { per_layer, total }
}

impl NetworkSpec {
    /// Output shape after every layer, in order.
    pub fn output_shapes(&self) -> Result<Vec<Vec<i64>>> {
        let mut shape = self.input_shape.clone();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(|e| Error::Shape(format!("{} layer {i}: {e}", self.name)))?;
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<i64>> {
        Ok(self
            .output_shapes()?
            .pop()
            .unwrap_or_else(|| self.input_shape.clone()))
    }

    pub fn param_count(&self) -> ParamCount {
        param_count(self)
    }

    pub fn trainable_count(&self) -> u64 {
        self.layers.iter().map(LayerSpec::trainable_count).sum()
    }

    /// Hex SHA-256 over the input shape and layer list.
    pub fn fingerprint(&self) -> String {
        let body = serde_json::to_vec(&(&self.input_shape, &self.layers))
            .expect("layer specs always serialize");
        hex::encode(Sha256::digest(&body))
    }
}
