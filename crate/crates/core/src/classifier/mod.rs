//! Transfer-learning classifiers: frozen pretrained backbones with a small
//! trainable head, early stopping and plateau learning-rate decay.

mod backbone;
mod metrics;
mod model;
mod schedule;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{AugmentPolicy, CLASSIFIER_IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::models::GanKind;

pub use backbone::{Backbone, BackboneKind, BackboneWeights, WEIGHTS_DIR_ENV};
pub use metrics::{accuracy, argmax_rows, evaluate, Predictor};
pub use model::{build_classifier, head_spec, Classifier, HEAD_DROPOUT, HEAD_HIDDEN};
pub use schedule::{
    fit, EarlyStopping, EpochMetrics, EpochRunner, FitOutcome, PlateauConfig, ReduceLrOnPlateau,
    StopDecision,
};
pub use train::{extract_features, train_classifier};

/// Which layers are frozen; part of the configuration fingerprint.
pub const FREEZE_BOUNDARY: &str = "all convolutional feature layers frozen; head trainable";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augment {
    None,
    Geometric,
}

impl Augment {
    pub const ALL: [Augment; 2] = [Augment::None, Augment::Geometric];

    pub fn as_str(self) -> &'static str {
        match self {
            Augment::None => "none",
            Augment::Geometric => "geometric",
        }
    }
}

impl fmt::Display for Augment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Augment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "no" | "off" => Ok(Augment::None),
            "geometric" | "geo" | "on" => Ok(Augment::Geometric),
            other => Err(Error::InvalidArgument(format!(
                "unknown augmentation {other:?} (expected none or geometric)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetVariant {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "dcgan")]
    DcganMerged,
    #[serde(rename = "wgan-gp")]
    WganGpMerged,
}

impl DatasetVariant {
    pub const ALL: [DatasetVariant; 3] = [
        DatasetVariant::Baseline,
        DatasetVariant::DcganMerged,
        DatasetVariant::WganGpMerged,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetVariant::Baseline => "baseline",
            DatasetVariant::DcganMerged => "dcgan",
            DatasetVariant::WganGpMerged => "wgan-gp",
        }
    }

    pub fn gan_kind(self) -> Option<GanKind> {
        match self {
            DatasetVariant::Baseline => None,
            DatasetVariant::DcganMerged => Some(GanKind::Dcgan),
            DatasetVariant::WganGpMerged => Some(GanKind::WganGp),
        }
    }
}

impl From<GanKind> for DatasetVariant {
    fn from(kind: GanKind) -> Self {
        match kind {
            GanKind::Dcgan => DatasetVariant::DcganMerged,
            GanKind::WganGp => DatasetVariant::WganGpMerged,
        }
    }
}

impl fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(DatasetVariant::Baseline),
            other => other.parse::<GanKind>().map(DatasetVariant::from).map_err(|_| {
                Error::InvalidArgument(format!(
                    "unknown dataset variant {other:?} (expected baseline, dcgan or wgan-gp)"
                ))
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierTrainConfig {
    pub backbone: BackboneKind,
    pub augment: Augment,
    pub augment_policy: AugmentPolicy,
    pub max_epochs: usize,
    pub patience: usize,
    pub initial_lr: f64,
    pub plateau: PlateauConfig,
    pub batch_size: usize,
    /// Images per backbone forward pass when extracting features.
    pub feature_batch_size: usize,
    pub seed: u64,
    pub image_size: i64,
    pub hidden_units: i64,
    pub dropout: f64,
    pub weights: BackboneWeights,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            backbone: BackboneKind::Vgg16,
            augment: Augment::None,
            augment_policy: AugmentPolicy::default(),
            max_epochs: 50,
            patience: 3,
            initial_lr: 1e-4,
            plateau: PlateauConfig::default(),
            batch_size: 32,
            feature_batch_size: 16,
            seed: 0,
            image_size: CLASSIFIER_IMAGE_SIZE,
            hidden_units: HEAD_HIDDEN,
            dropout: HEAD_DROPOUT,
            weights: BackboneWeights::Untrained,
        }
    }
}

impl ClassifierTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if self.batch_size == 0 || self.feature_batch_size == 0 {
            return bad("batch sizes must be >= 1".into());
        }
        if !(self.initial_lr > 0.0) {
            return bad(format!("initial_lr must be > 0, got {}", self.initial_lr));
        }
        if self.image_size < 32 {
            return bad(format!("image_size must be >= 32, got {}", self.image_size));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        self.augment_policy.validate()
    }

    /// Hex SHA-256 over the configuration and the freezing boundary. The
    /// weights file is identified by name only, so moving it keeps the
    /// fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        if let BackboneWeights::Pretrained(p) = &c.weights {
            c.weights = BackboneWeights::Pretrained(p.file_name().map(Into::into).unwrap_or_default());
        }
        let body = serde_json::to_vec(&(&c, FREEZE_BOUNDARY)).expect("config serializes");
        hex::encode(Sha256::digest(&body))
    }
}

pub const RESULT_CSV_HEADER: &str = "backbone,augment,variant,epochs,best_val_accuracy,stopped_early";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_fingerprint: String,
    pub backbone: BackboneKind,
    pub augment: Augment,
    pub variant: DatasetVariant,
    pub seed: u64,
    pub pretrained: bool,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
    pub curves: Vec<EpochMetrics>,
    pub learning_rates: Vec<f64>,
}

impl ExperimentResult {
    pub fn from_outcome(
        config: &ClassifierTrainConfig,
        variant: DatasetVariant,
        pretrained: bool,
        outcome: FitOutcome,
    ) -> Self {
        ExperimentResult {
            config_fingerprint: config.fingerprint(),
            backbone: config.backbone,
            augment: config.augment,
            variant,
            seed: config.seed,
            pretrained,
            epochs_run: outcome.epochs_run,
            best_epoch: outcome.best_epoch,
            best_val_accuracy: outcome.best_val_accuracy,
            stopped_early: outcome.stopped_early,
            curves: outcome.curves,
            learning_rates: outcome.learning_rates,
        }
    }

    /// `backbone,augment,variant,epochs,best_val_accuracy,stopped_early`.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{}",
            self.backbone, self.augment, self.variant, self.epochs_run, self.best_val_accuracy, self.stopped_early
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in DatasetVariant::ALL {
            assert_eq!(v.as_str().parse::<DatasetVariant>().unwrap(), v);
        }
        for a in Augment::ALL {
            assert_eq!(a.as_str().parse::<Augment>().unwrap(), a);
        }
        for b in BackboneKind::ALL {
            assert_eq!(b.as_str().parse::<BackboneKind>().unwrap(), b);
        }
        assert!("wgan".parse::<DatasetVariant>().is_err());
    }

    #[test]
    fn fingerprint_ignores_weights_location() {
        let a = ClassifierTrainConfig {
            weights: BackboneWeights::Pretrained("/a/vgg16.safetensors".into()),
            ..Default::default()
        };
        let b = ClassifierTrainConfig {
            weights: BackboneWeights::Pretrained("/b/vgg16.safetensors".into()),
            ..Default::default()
        };
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = ClassifierTrainConfig { seed: 1, ..a.clone() };
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
