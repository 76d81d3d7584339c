//! Frozen convolutional feature extractors with torchvision tensor names,
//! so weights exported from torchvision load unchanged.

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tch::nn::{self, ModuleT};
use tch::{Device, Tensor};

use crate::error::{Error, Result};
use crate::rng;

pub const WEIGHTS_DIR_ENV: &str = "SATGAN_WEIGHTS_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Vgg16,
    WideResnet50,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 2] = [BackboneKind::Vgg16, BackboneKind::WideResnet50];

    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::Vgg16 => "vgg16",
            BackboneKind::WideResnet50 => "wide_resnet50",
        }
    }

    /// Width of the flattened feature vector fed to the head.
    pub fn feature_dim(self) -> i64 {
        match self {
            BackboneKind::Vgg16 => 512 * 7 * 7,
            BackboneKind::WideResnet50 => 2048,
        }
    }

    pub fn weights_file_name(self) -> &'static str {
        match self {
            BackboneKind::Vgg16 => "vgg16.safetensors",
            BackboneKind::WideResnet50 => "wide_resnet50_2.safetensors",
        }
    }

    fn torchvision_builder(self) -> &'static str {
        match self {
            BackboneKind::Vgg16 => "vgg16",
            BackboneKind::WideResnet50 => "wide_resnet50_2",
        }
    }

    /// How to produce the weights file with a stock Python install.
    pub fn export_instructions(self, path: &Path) -> String {
        format!(
            "export ImageNet weights once with torchvision and safetensors:\n  \
             python -c \"import torchvision; from safetensors.torch import save_file; \
             m = torchvision.models.{}(weights='DEFAULT'); \
             save_file({{k: v.contiguous() for k, v in m.state_dict().items()}}, '{}')\"\n\
             or point --weights-dir / {WEIGHTS_DIR_ENV} at a directory containing {}",
            self.torchvision_builder(),
            path.display(),
            self.weights_file_name()
        )
    }
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vgg16" => Ok(BackboneKind::Vgg16),
            "wide_resnet50" | "wide_resnet50_2" | "wide-resnet50" | "resnet50" | "wrn50" => {
                Ok(BackboneKind::WideResnet50)
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown backbone {other:?} (expected vgg16 or wide_resnet50)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneWeights {
    Pretrained(PathBuf),
    /// Seeded He initialization; exercises the pipeline without weights.
    Untrained,
}

impl BackboneWeights {
    /// Finds `<dir>/<weights file>` where `dir` is the argument, then the
    /// environment variable, then `./weights`.
    pub fn locate(kind: BackboneKind, dir: Option<&Path>) -> Result<Self> {
        let dir = dir
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(WEIGHTS_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("weights"));
        let path = if dir.is_file() {
            dir
        } else {
            dir.join(kind.weights_file_name())
        };
        if !path.is_file() {
            return Err(Error::MissingPretrainedWeights {
                backbone: kind.to_string(),
                instructions: kind.export_instructions(&path),
                path,
            });
        }
        Ok(BackboneWeights::Pretrained(path))
    }

    pub fn is_pretrained(&self) -> bool {
        matches!(self, BackboneWeights::Pretrained(_))
    }
}

/// A frozen feature extractor. Always runs in inference mode.
pub struct Backbone {
    kind: BackboneKind,
    vs: nn::VarStore,
    net: nn::SequentialT,
    pretrained: bool,
}

const VGG16_BLOCKS: [&[i64]; 5] = [&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512], &[512, 512, 512]];

fn vgg16_features(root: &nn::Path) -> nn::SequentialT {
    let f = root / "features";
    let mut seq = nn::seq_t();
    let mut c_in = 3;
    let mut idx = 0;
    for block in VGG16_BLOCKS {
        for &c_out in block {
            let cfg = nn::ConvConfig {
                padding: 1,
                ..Default::default()
            };
            seq = seq
                .add(nn::conv2d(&f / idx.to_string(), c_in, c_out, 3, cfg))
                .add_fn(|x| x.relu());
            idx += 2;
            c_in = c_out;
        }
        seq = seq.add_fn(|x| x.max_pool2d_default(2));
        idx += 1;
    }
    seq.add_fn(|x| x.adaptive_avg_pool2d([7, 7]).flatten(1, -1))
}

fn conv(p: nn::Path, c_in: i64, c_out: i64, k: i64, stride: i64, padding: i64) -> nn::Conv2D {
    let cfg = nn::ConvConfig {
        stride,
        padding,
        bias: false,
        ..Default::default()
    };
    nn::conv2d(p, c_in, c_out, k, cfg)
}

fn bottleneck(p: nn::Path, c_in: i64, planes: i64, stride: i64) -> impl ModuleT {
    let width = planes * 2;
    let out = planes * 4;
    let conv1 = conv(&p / "conv1", c_in, width, 1, 1, 0);
    let bn1 = nn::batch_norm2d(&p / "bn1", width, Default::default());
    let conv2 = conv(&p / "conv2", width, width, 3, stride, 1);
    let bn2 = nn::batch_norm2d(&p / "bn2", width, Default::default());
    let conv3 = conv(&p / "conv3", width, out, 1, 1, 0);
    let bn3 = nn::batch_norm2d(&p / "bn3", out, Default::default());
    let down = (stride != 1 || c_in != out).then(|| {
        nn::seq_t()
            .add(conv(&p / "downsample" / "0", c_in, out, 1, stride, 0))
            .add(nn::batch_norm2d(&p / "downsample" / "1", out, Default::default()))
    });
    nn::func_t(move |x, train| {
        let y = x
            .apply(&conv1)
            .apply_t(&bn1, train)
            .relu()
            .apply(&conv2)
            .apply_t(&bn2, train)
            .relu()
            .apply(&conv3)
            .apply_t(&bn3, train);
        let skip = match &down {
            Some(d) => x.apply_t(d, train),
            None => x.shallow_clone(),
        };
        (y + skip).relu()
    })
}

fn wide_resnet50_features(root: &nn::Path) -> nn::SequentialT {
    let mut seq = nn::seq_t()
        .add(conv(root / "conv1", 3, 64, 7, 2, 3))
        .add(nn::batch_norm2d(root / "bn1", 64, Default::default()))
        .add_fn(|x| x.relu().max_pool2d([3, 3], [2, 2], [1, 1], [1, 1], false));
    let mut c_in = 64;
    for (i, (planes, blocks, stride)) in [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)]
        .into_iter()
        .enumerate()
    {
        let layer = root / format!("layer{}", i + 1);
        for b in 0..blocks {
            let s = if b == 0 { stride } else { 1 };
            seq = seq.add(bottleneck(&layer / b.to_string(), c_in, planes, s));
            c_in = planes * 4;
        }
    }
    seq.add_fn(|x| x.adaptive_avg_pool2d([1, 1]).flatten(1, -1))
}

/// He-normal (fan-out) convolution weights, unit batch-norm scale, zero
/// shifts and biases, drawn from a seeded stream.
fn seeded_init(vs: &nn::VarStore, seed: u64) {
    let mut named: Vec<(String, Tensor)> = vs.variables().into_iter().collect();
    named.sort_by(|a, b| a.0.cmp(&b.0));
    let mut stream = rng::stream(seed, &["backbone-init"]);
    tch::no_grad(|| {
        for (name, mut t) in named {
            let size = t.size();
            if name.ends_with("weight") && size.len() == 4 {
                let fan_out = (size[0] * size[2] * size[3]) as f64;
                let dist = Normal::new(0.0, (2.0 / fan_out).sqrt()).expect("positive std");
                let values: Vec<f32> = (0..t.numel())
                    .map(|_| dist.sample(&mut stream) as f32)
                    .collect();
                t.copy_(&Tensor::from_slice(&values).reshape(&size));
            } else if name.ends_with("weight") || name.ends_with("running_var") {
                let _ = t.fill_(1.0);
            } else {
                let _ = t.fill_(0.0);
            }
        }
    });
}

impl Backbone {
    pub fn build(kind: BackboneKind, weights: &BackboneWeights, seed: u64) -> Result<Self> {
        let mut vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let net = match kind {
            BackboneKind::Vgg16 => vgg16_features(&root),
            BackboneKind::WideResnet50 => wide_resnet50_features(&root),
        };
        match weights {
            BackboneWeights::Pretrained(path) => {
                if !path.is_file() {
                    return Err(Error::MissingPretrainedWeights {
                        backbone: kind.to_string(),
                        path: path.clone(),
                        instructions: kind.export_instructions(path),
                    });
                }
                vs.load(path).map_err(|e| {
                    Error::Checkpoint(format!("loading {kind} weights from {}: {e}", path.display()))
                })?;
            }
            BackboneWeights::Untrained => seeded_init(&vs, seed),
        }
        vs.freeze();
        Ok(Backbone {
            kind,
            vs,
            net,
            pretrained: weights.is_pretrained(),
        })
    }

    pub fn kind(&self) -> BackboneKind {
        self.kind
    }

    pub fn is_pretrained(&self) -> bool {
        self.pretrained
    }

    /// Learnable (now frozen) parameters, excluding running statistics.
    pub fn frozen_param_count(&self) -> u64 {
        self.vs
            .trainable_variables()
            .iter()
            .map(|t| t.numel() as u64)
            .sum()
    }

    /// Every stored tensor by name, for freezing checks.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut v: Vec<_> = self.vs.variables().into_iter().collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    /// `(N, 3, H, W)` backbone-normalized images -> `(N, feature_dim)`.
    pub fn features(&self, images: &Tensor) -> Tensor {
        tch::no_grad(|| images.apply_t(&self.net, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torchvision_parameter_counts() {
        let vgg = Backbone::build(BackboneKind::Vgg16, &BackboneWeights::Untrained, 0).unwrap();
        assert_eq!(vgg.frozen_param_count(), 14_714_688);
        let names: Vec<_> = vgg.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"features.28.weight".to_string()));
        let wrn = Backbone::build(BackboneKind::WideResnet50, &BackboneWeights::Untrained, 0).unwrap();
        assert_eq!(wrn.frozen_param_count(), 66_834_240);
        let names: Vec<_> = wrn.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"layer4.2.bn3.running_var".to_string()));
        assert!(names.contains(&"layer1.0.downsample.0.weight".to_string()));
    }

    #[test]
    fn feature_shapes() {
        let wrn = Backbone::build(BackboneKind::WideResnet50, &BackboneWeights::Untrained, 0).unwrap();
        let x = Tensor::zeros([2, 3, 64, 64], (tch::Kind::Float, Device::Cpu));
        assert_eq!(wrn.features(&x).size(), vec![2, 2048]);
        let vgg = Backbone::build(BackboneKind::Vgg16, &BackboneWeights::Untrained, 0).unwrap();
        assert_eq!(vgg.features(&x).size(), vec![2, 25088]);
    }

    #[test]
    fn missing_weights_explain_how_to_get_them() {
        let dir = tempfile::tempdir().unwrap();
        match BackboneWeights::locate(BackboneKind::Vgg16, Some(dir.path())) {
            Err(Error::MissingPretrainedWeights { instructions, .. }) => {
                assert!(instructions.contains("torchvision.models.vgg16"));
            }
            other => panic!("expected missing weights, got {other:?}"),
        }
    }

    #[test]
    fn untrained_init_is_seeded() {
        let a = Backbone::build(BackboneKind::Vgg16, &BackboneWeights::Untrained, 4).unwrap();
        let b = Backbone::build(BackboneKind::Vgg16, &BackboneWeights::Untrained, 4).unwrap();
        for ((n, x), (_, y)) in a.named_tensors().into_iter().zip(b.named_tensors()) {
            assert!(x.equal(&y), "{n}");
        }
    }
}
