use rand::Rng;
use tch::{Kind, Tensor};

use super::backbone::{Backbone, BackboneKind, BackboneWeights};
use super::metrics::{argmax_rows, Predictor};
use crate::data::{ImageBatch, RangeTag};
use crate::error::{Error, Result};
use crate::models::{LayerSpec, Mode, Network, NetworkSpec};
use crate::rng;

pub const HEAD_HIDDEN: i64 = 512;
pub const HEAD_DROPOUT: f64 = 0.5;

/// dense(feature_dim -> hidden) -> relu -> dropout -> dense(hidden -> n).
pub fn head_spec(feature_dim: i64, hidden: i64, dropout: f64, n_classes: i64) -> NetworkSpec {
    NetworkSpec {
        name: "classifier_head".into(),
        input_shape: vec![feature_dim],
        layers: vec![
            LayerSpec::Dense {
                in_features: feature_dim,
                out_features: hidden,
                bias: true,
            },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: dropout },
            LayerSpec::Dense {
                in_features: hidden,
                out_features: n_classes,
                bias: true,
            },
        ],
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for dense weights and biases.
fn init_head(head: &Network, seed: u64) -> Result<()> {
    let mut stream = rng::stream(seed, &["head-init"]);
    let fans: Vec<i64> = head
        .spec()
        .layers
        .iter()
        .map(|l| match l {
            LayerSpec::Dense { in_features, .. } => *in_features,
            _ => 0,
        })
        .collect();
    for (name, t, _) in head.named_tensors() {
        let layer: usize = name.split('.').next().unwrap_or("0").parse().unwrap_or(0);
        let bound = 1.0 / (fans[layer] as f64).sqrt();
        let values: Vec<f32> = (0..t.numel())
            .map(|_| stream.random_range(-bound..bound) as f32)
            .collect();
        head.copy_named(&name, &Tensor::from_slice(&values).reshape(t.size()))?;
    }
    Ok(())
}

/// Frozen backbone plus trainable head, producing log-probabilities.
pub struct Classifier {
    backbone: Backbone,
    head: Network,
    n_classes: i64,
}

impl Classifier {
    pub fn build(
        kind: BackboneKind,
        n_classes: usize,
        weights: &BackboneWeights,
        hidden: i64,
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "a classifier needs at least 2 classes, got {n_classes}"
            )));
        }
        let backbone = Backbone::build(kind, weights, seed)?;
        let head = Network::new(&head_spec(kind.feature_dim(), hidden, dropout, n_classes as i64))?;
        init_head(&head, seed)?;
        Ok(Classifier {
            backbone,
            head,
            n_classes: n_classes as i64,
        })
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn head(&self) -> &Network {
        &self.head
    }

    pub fn n_classes(&self) -> i64 {
        self.n_classes
    }

    /// Only the head is optimized.
    pub fn trainable_param_count(&self) -> u64 {
        self.head.spec().trainable_count()
    }

    pub fn frozen_param_count(&self) -> u64 {
        self.backbone.frozen_param_count()
    }

    pub fn features(&self, batch: &ImageBatch) -> Result<Tensor> {
        if batch.range != RangeTag::BackboneNormalized {
            return Err(Error::InvalidArgument(
                "classifier input must be backbone-normalized".into(),
            ));
        }
        Ok(self.backbone.features(&batch.data))
    }

    pub fn log_probs_from_features(&self, features: &Tensor, mode: Mode<'_>) -> Result<Tensor> {
        Ok(self.head.forward(features, mode)?.log_softmax(-1, Kind::Float))
    }

    pub fn forward(&self, batch: &ImageBatch, mode: Mode<'_>) -> Result<Tensor> {
        let f = self.features(batch)?;
        self.log_probs_from_features(&f, mode)
    }
}

impl Predictor for Classifier {
    fn predict(&self, batch: &ImageBatch) -> Result<Vec<i64>> {
        let scores = tch::no_grad(|| self.forward(batch, Mode::Eval))?;
        argmax_rows(&scores)
    }
}

/// Classifier with the default head (512 hidden units, dropout 0.5).
pub fn build_classifier(kind: BackboneKind, n_classes: usize, weights: &BackboneWeights, seed: u64) -> Result<Classifier> {
    Classifier::build(kind, n_classes, weights, HEAD_HIDDEN, HEAD_DROPOUT, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_rows_and_freezing() {
        let c = build_classifier(BackboneKind::WideResnet50, 3, &BackboneWeights::Untrained, 1).unwrap();
        assert_eq!(c.trainable_param_count(), 2048 * 512 + 512 + 512 * 3 + 3);
        assert!(c.frozen_param_count() > 0);
        let data = Tensor::zeros([4, 3, 32, 32], (Kind::Float, tch::Device::Cpu));
        let batch = ImageBatch::new(data, RangeTag::BackboneNormalized, None).unwrap();
        let out = c.forward(&batch, Mode::Eval).unwrap();
        assert_eq!(out.size(), vec![4, 3]);
        let sums = out.exp().sum_dim_intlist([1i64].as_slice(), false, Kind::Float);
        for s in Vec::<f32>::try_from(&sums).unwrap() {
            assert!((s - 1.0).abs() < 1e-5);
        }
    }
}
