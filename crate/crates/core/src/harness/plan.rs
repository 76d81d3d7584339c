use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{Augment, BackboneKind, BackboneWeights, ClassifierTrainConfig, DatasetVariant};
use crate::data::{DEFAULT_TRAIN_RATIO, EUROSAT_CLASSES};
use crate::error::{Error, Result};
use crate::rng;

pub const PLAN_VERSION: u32 = 1;
/// Generated images per real image in the full-size study (2,560 / 27,000).
pub const GENERATED_FRACTION: f64 = 2560.0 / 27000.0;

/// One ablation cell: a backbone, an augmentation setting and a dataset
/// variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub backbone: BackboneKind,
    pub augment: Augment,
    pub variant: DatasetVariant,
}

impl CellKey {
    /// Every cell in report order: backbone, then augmentation, then variant.
    pub fn full_matrix() -> Vec<CellKey> {
        let mut out = Vec::with_capacity(12);
        for backbone in BackboneKind::ALL {
            for augment in Augment::ALL {
                for variant in DatasetVariant::ALL {
                    out.push(CellKey {
                        backbone,
                        augment,
                        variant,
                    });
                }
            }
        }
        out
    }

    pub fn id(&self) -> String {
        format!("{}__{}__{}", self.backbone, self.augment, self.variant)
    }

    /// Seed derived from the plan seed and this cell's key only, so cells
    /// are independent of execution order.
    pub fn seed(&self, plan_seed: u64) -> u64 {
        rng::derive_seed(
            plan_seed,
            &[self.backbone.as_str(), self.augment.as_str(), self.variant.as_str()],
        )
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.backbone, self.augment, self.variant)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub backbone: BackboneKind,
    pub augment: Augment,
    pub variant: DatasetVariant,
    /// Overrides the derived cell seed.
    pub seed: Option<u64>,
}

impl CellSpec {
    pub fn key(&self) -> CellKey {
        CellKey {
            backbone: self.backbone,
            augment: self.augment,
            variant: self.variant,
        }
    }
}

/// Subset sizes and caps used when the plan runs at desk scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskScale {
    /// Classes to keep; empty means the first three present on disk.
    pub classes: Vec<String>,
    pub images_per_class: usize,
    /// Generated images merged per class; `None` keeps the full-size ratio.
    pub generated_per_class: Option<usize>,
    pub max_epochs: usize,
}

impl Default for DeskScale {
    fn default() -> Self {
        DeskScale {
            classes: Vec::new(),
            images_per_class: 300,
            generated_per_class: None,
            max_epochs: 10,
        }
    }
}

/// Classifier settings shared by every cell.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingOverrides {
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub initial_lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub feature_batch_size: Option<usize>,
    pub image_size: Option<i64>,
    /// Directory (or file) holding the backbone weights.
    pub weights_dir: Option<PathBuf>,
    /// Use seeded random backbone weights instead of pretrained ones.
    pub untrained_backbone: bool,
}

/// How to produce missing generated sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanBuild {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for GanBuild {
    fn default() -> Self {
        GanBuild {
            epochs: 300,
            batch_size: 16,
            seed: 0,
            checkpoint_every: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationPlan {
    pub version: u32,
    pub seed: u64,
    /// Seed of the train/validation split; defaults to `seed`.
    pub split_seed: Option<u64>,
    pub split_ratio: f64,
    /// Class folders to expect; defaults to the ten land-cover classes.
    pub classes: Vec<String>,
    pub data_root: Option<PathBuf>,
    /// Holds `<gan-kind>/<Class>/*.png`; defaults to `<out>/generated`.
    pub generated_root: Option<PathBuf>,
    pub desk_scale: bool,
    pub desk: DeskScale,
    pub parallelism: usize,
    pub training: TrainingOverrides,
    /// Train GANs and export images when a needed generated set is absent.
    pub build_generated: Option<GanBuild>,
    /// Empty means the full matrix.
    pub cells: Vec<CellSpec>,
}

impl Default for AblationPlan {
    fn default() -> Self {
        AblationPlan {
            version: PLAN_VERSION,
            seed: 0,
            split_seed: None,
            split_ratio: DEFAULT_TRAIN_RATIO,
            classes: Vec::new(),
            data_root: None,
            generated_root: None,
            desk_scale: false,
            desk: DeskScale::default(),
            parallelism: 1,
            training: TrainingOverrides::default(),
            build_generated: None,
            cells: Vec::new(),
        }
    }
}

impl AblationPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: AblationPlan = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PLAN_VERSION {
            return Err(Error::Config(format!(
                "unsupported plan version {} (expected {PLAN_VERSION})",
                self.version
            )));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        let mut seen = BTreeSet::new();
        for cell in &self.cells {
            if !seen.insert(cell.key()) {
                return Err(Error::Config(format!("duplicate cell {}", cell.key())));
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        if self.classes.is_empty() {
            EUROSAT_CLASSES.iter().map(|s| s.to_string()).collect()
        } else {
            self.classes.clone()
        }
    }

    /// Classes used when they are known without scanning: the explicit desk
    /// classes at desk scale, the whole class set otherwise.
    pub fn active_classes(&self) -> Vec<String> {
        if self.desk_scale && !self.desk.classes.is_empty() {
            self.desk.classes.clone()
        } else {
            self.class_names()
        }
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.seed)
    }

    /// Generated images merged per class, if capped.
    pub fn generated_per_class(&self) -> Option<usize> {
        if !self.desk_scale {
            return None;
        }
        Some(self.desk.generated_per_class.unwrap_or_else(|| {
            ((self.desk.images_per_class as f64) * GENERATED_FRACTION).round() as usize
        }))
    }

    /// Cells with their seeds, in plan order.
    pub fn resolved_cells(&self) -> Vec<(CellKey, u64)> {
        if self.cells.is_empty() {
            CellKey::full_matrix()
                .into_iter()
                .map(|k| (k, k.seed(self.seed)))
                .collect()
        } else {
            self.cells
                .iter()
                .map(|c| (c.key(), c.seed.unwrap_or_else(|| c.key().seed(self.seed))))
                .collect()
        }
    }

    /// Variants any cell needs.
    pub fn needed_variants(&self) -> BTreeSet<DatasetVariant> {
        self.resolved_cells().iter().map(|(k, _)| k.variant).collect()
    }

    /// Classifier configuration for one cell.
    pub fn cell_config(&self, key: CellKey, seed: u64) -> Result<ClassifierTrainConfig> {
        let t = &self.training;
        let d = ClassifierTrainConfig::default();
        let weights = if t.untrained_backbone {
            BackboneWeights::Untrained
        } else {
            BackboneWeights::locate(key.backbone, t.weights_dir.as_deref())?
        };
        let max_epochs = match (self.desk_scale, t.max_epochs) {
            (_, Some(m)) => m,
            (true, None) => self.desk.max_epochs,
            (false, None) => d.max_epochs,
        };
        Ok(ClassifierTrainConfig {
            backbone: key.backbone,
            augment: key.augment,
            seed,
            max_epochs,
            patience: t.patience.unwrap_or(d.patience),
            initial_lr: t.initial_lr.unwrap_or(d.initial_lr),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            feature_batch_size: t.feature_batch_size.unwrap_or(d.feature_batch_size),
            image_size: t.image_size.unwrap_or(d.image_size),
            weights,
            ..d
        })
    }
}
