use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plan::{AblationPlan, GanBuild};
use crate::classifier::DatasetVariant;
use crate::data::{
    merge_generated_with, scan_dataset, split, ClassSet, DatasetIndex, MergeOptions, Source, Split,
};
use crate::error::{Error, Result};
use crate::models::GanKind;
use crate::trainer::{generate_images, train_gan, GanTrainConfig};

/// Generated images per class per GAN kind in the full-size study.
pub const FULL_GENERATED_PER_CLASS: usize = 256;
const DESK_DEFAULT_CLASSES: usize = 3;

/// Scans `data_root`, keeps real images only, applies the desk-scale subset
/// if requested and splits. Without explicit desk classes the first three
/// classes found on disk are used.
pub fn prepare_baseline(plan: &AblationPlan, data_root: &Path) -> Result<DatasetIndex> {
    let class_set = ClassSet::new(&plan.class_names())?;
    let scanned = scan_dataset(data_root, &class_set)?;
    let real: Vec<_> = scanned
        .records()
        .iter()
        .filter(|r| r.source == Source::Real)
        .cloned()
        .collect();
    let index = DatasetIndex::new(class_set, real)?;
    let active = if plan.desk_scale && plan.desk.classes.is_empty() {
        index.classes_present().into_iter().take(DESK_DEFAULT_CLASSES).collect()
    } else {
        plan.active_classes()
    };
    let per_class = plan.desk_scale.then_some(plan.desk.images_per_class);
    let index = if plan.desk_scale || active.len() != plan.class_names().len() {
        index.subset(&active, per_class)?
    } else {
        index
    };
    split(&index, plan.split_ratio, plan.split_seed())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantStats {
    pub variant: DatasetVariant,
    pub total: usize,
    pub train: usize,
    pub val: usize,
    pub generated: usize,
    /// Generated images per real training image.
    pub generated_ratio: f64,
    /// Generated images per real image across both splits.
    pub generated_share_of_real: f64,
}

impl VariantStats {
    fn of(variant: DatasetVariant, index: &DatasetIndex) -> Self {
        let generated = index.records().iter().filter(|r| r.source != Source::Real).count();
        let train = index.count_in(Split::Train);
        let real_train = train - generated;
        let real = index.len() - generated;
        let per = |n: usize| if n == 0 { 0.0 } else { generated as f64 / n as f64 };
        VariantStats {
            variant,
            total: index.len(),
            train,
            val: index.count_in(Split::Val),
            generated,
            generated_ratio: per(real_train),
            generated_share_of_real: per(real),
        }
    }
}

/// Baseline plus the merged variants a plan needs.
#[derive(Clone, Debug)]
pub struct VariantSet {
    indices: BTreeMap<DatasetVariant, DatasetIndex>,
}

impl VariantSet {
    pub fn get(&self, variant: DatasetVariant) -> Result<&DatasetIndex> {
        self.indices.get(&variant).ok_or_else(|| Error::MissingVariant {
            variant: variant.to_string(),
            reason: "not built for this plan".into(),
        })
    }

    pub fn variants(&self) -> impl Iterator<Item = DatasetVariant> + '_ {
        self.indices.keys().copied()
    }

    pub fn stats(&self) -> Vec<VariantStats> {
        self.indices.iter().map(|(v, i)| VariantStats::of(*v, i)).collect()
    }

    /// Writes `<dir>/<variant>.csv` manifests and `<dir>/variants.json`.
    pub fn write_manifests(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (variant, index) in &self.indices {
            index.write_manifest(&dir.join(format!("{variant}.csv")))?;
        }
        let path = dir.join("variants.json");
        let body = serde_json::to_string_pretty(&self.stats())?;
        fs::write(&path, body + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Directory holding one GAN kind's `<Class>/*.png` images.
pub fn generated_dir(generated_root: &Path, kind: GanKind) -> PathBuf {
    generated_root.join(kind.as_str())
}

/// Merges each needed GAN kind's images into the train split of `baseline`.
///
/// A needed kind whose directory is absent, or which lacks images for a
/// class of the baseline, is reported as a missing variant.
pub fn build_variants(
    baseline: &DatasetIndex,
    generated_root: &Path,
    needed: &BTreeSet<DatasetVariant>,
    per_class_limit: Option<usize>,
) -> Result<VariantSet> {
    let mut indices = BTreeMap::new();
    indices.insert(DatasetVariant::Baseline, baseline.clone());
    let classes = baseline.classes_present();
    for variant in needed {
        let Some(kind) = variant.gan_kind() else { continue };
        let dir = generated_dir(generated_root, kind);
        if !dir.is_dir() {
            return Err(Error::MissingVariant {
                variant: variant.to_string(),
                reason: format!("no generated images at {}", dir.display()),
            });
        }
        let options = MergeOptions {
            classes: Some(classes.clone()),
            per_class_limit,
        };
        let merged = merge_generated_with(baseline, &dir, Source::from(kind), &options)?;
        for class in &classes {
            let present = merged
                .class_records(class)
                .iter()
                .any(|r| r.source == Source::from(kind));
            if !present {
                return Err(Error::MissingVariant {
                    variant: variant.to_string(),
                    reason: format!("no generated images for class {class} under {}", dir.display()),
                });
            }
        }
        indices.insert(*variant, merged);
    }
    Ok(VariantSet { indices })
}

/// Kinds among `needed` whose generated directory is absent or incomplete.
pub fn missing_kinds(
    baseline: &DatasetIndex,
    generated_root: &Path,
    needed: &BTreeSet<DatasetVariant>,
    per_class: usize,
) -> Vec<GanKind> {
    needed
        .iter()
        .filter_map(|v| v.gan_kind())
        .filter(|kind| {
            let dir = generated_dir(generated_root, *kind);
            baseline.classes_present().iter().any(|class| {
                fs::read_dir(dir.join(class)).map_or(true, |entries| entries.count() < per_class)
            })
        })
        .collect()
}

/// Trains one GAN per class of `baseline` and exports `per_class` images
/// for it under `generated_root/<kind>/`. GAN runs go to
/// `runs_root/<kind>/<Class>/`.
pub fn build_generated(
    baseline: &DatasetIndex,
    kind: GanKind,
    build: &GanBuild,
    per_class: usize,
    generated_root: &Path,
    runs_root: &Path,
) -> Result<Vec<PathBuf>> {
    let out = generated_dir(generated_root, kind);
    let mut written = Vec::new();
    for class in baseline.classes_present() {
        let class_dir = out.join(&class);
        if class_dir.is_dir() {
            fs::remove_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
        }
        let mut config = GanTrainConfig::new(kind, class.clone());
        config.epochs = build.epochs;
        config.batch_size = build.batch_size;
        config.seed = build.seed;
        config.checkpoint_every = build.checkpoint_every;
        let run_dir = runs_root.join(kind.as_str()).join(&class);
        log::info!("training {kind} for {class} ({} epochs)", build.epochs);
        let (ck, _) = train_gan(baseline, &config, Some(&run_dir))?;
        written.extend(generate_images(&ck, per_class, build.seed, &out)?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generated_file_name, ImageFormat, ImageRecord};
    use image::RgbImage;

    fn baseline(classes: &[&str], per_class: usize) -> DatasetIndex {
        let records = classes
            .iter()
            .flat_map(|c| {
                (0..per_class).map(move |i| ImageRecord {
                    path: PathBuf::from(format!("/real/{c}/{c}_{i}.jpg")),
                    label: c.to_string(),
                    source: Source::Real,
                    format: ImageFormat::Jpg,
                })
            })
            .collect();
        let index = DatasetIndex::new(ClassSet::new(classes).unwrap(), records).unwrap();
        split(&index, 0.75, 1).unwrap()
    }

    fn write_set(root: &Path, kind: GanKind, classes: &[&str], n: usize) {
        for class in classes {
            let dir = generated_dir(root, kind).join(class);
            fs::create_dir_all(&dir).unwrap();
            for i in 0..n {
                RgbImage::new(64, 64).save(dir.join(generated_file_name(class, kind, i))).unwrap();
            }
        }
    }

    #[test]
    fn variants_grow_train_only_and_stay_disjoint() {
        let classes = ["Forest", "River", "SeaLake"];
        let base = baseline(&classes, 90);
        let root = tempfile::tempdir().unwrap();
        write_set(root.path(), GanKind::Dcgan, &classes, 9);
        write_set(root.path(), GanKind::WganGp, &classes, 9);
        let set = build_variants(&base, root.path(), &DatasetVariant::ALL.into_iter().collect(), None).unwrap();
        let stats = set.stats();
        assert_eq!(stats.iter().map(|s| s.total).collect::<Vec<_>>(), vec![270, 297, 297]);
        for s in &stats {
            assert_eq!(s.val, base.count_in(Split::Val));
        }
        let real_train = base.count_in(Split::Train) as f64;
        assert!((stats[1].generated_share_of_real - 27.0 / 270.0).abs() < 1e-12);
        assert!((stats[1].generated_ratio - 27.0 / real_train).abs() < 1e-12);
        assert_eq!(stats[0].generated_share_of_real, 0.0);
        let dcgan = set.get(DatasetVariant::DcganMerged).unwrap();
        assert_eq!(dcgan.count_by_source(Source::GanWganGp), 0);
        let wgan = set.get(DatasetVariant::WganGpMerged).unwrap();
        assert_eq!(wgan.count_by_source(Source::GanDcgan), 0);

        let dir = tempfile::tempdir().unwrap();
        set.write_manifests(dir.path()).unwrap();
        for v in DatasetVariant::ALL {
            assert!(dir.path().join(format!("{v}.csv")).is_file());
        }
    }

    #[test]
    fn missing_set_names_the_variant() {
        let classes = ["Forest", "River"];
        let base = baseline(&classes, 8);
        let root = tempfile::tempdir().unwrap();
        write_set(root.path(), GanKind::Dcgan, &classes, 2);
        write_set(root.path(), GanKind::WganGp, &["Forest"], 2);
        let needed: BTreeSet<_> = DatasetVariant::ALL.into_iter().collect();
        let err = build_variants(&base, root.path(), &needed, None).unwrap_err();
        assert!(err.to_string().contains("wgan-gp"), "{err}");
        assert_eq!(missing_kinds(&base, root.path(), &needed, 2), vec![GanKind::WganGp]);

        let empty = tempfile::tempdir().unwrap();
        let err = build_variants(&base, empty.path(), &needed, None).unwrap_err();
        assert!(matches!(err, Error::MissingVariant { ref variant, .. } if variant == "dcgan"));
    }
}
