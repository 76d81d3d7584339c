use std::fs;
use std::path::Path;

use super::index::{check_decodable, DatasetIndex};
use super::normalize::GAN_IMAGE_SIZE;
use super::record::{parse_generated_name, ImageFormat, ImageRecord, Source};
use crate::error::{Error, Result};

/// Metadata written next to an exported set; skipped when merging.
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Restrictions applied while merging a generated set.
#[derive(Clone, Debug, Default)]
pub struct MergeOptions {
    /// Only merge these class folders; other folders are skipped instead of
    /// rejected. Used when merging into a class subset of the full corpus.
    pub classes: Option<Vec<String>>,
    /// Keep at most this many images per class (lowest indices first).
    pub per_class_limit: Option<usize>,
}

/// Appends the generated PNGs under `<generated_dir>/<Class>/` to the train
/// split of `index`.
pub fn merge_generated(
    index: &DatasetIndex,
    generated_dir: &Path,
    source_tag: Source,
) -> Result<DatasetIndex> {
    merge_generated_with(index, generated_dir, source_tag, &MergeOptions::default())
}

pub fn merge_generated_with(
    index: &DatasetIndex,
    generated_dir: &Path,
    source_tag: Source,
    options: &MergeOptions,
) -> Result<DatasetIndex> {
    let Some(kind) = source_tag.gan_kind() else {
        return Err(Error::InvalidArgument(
            "generated images need a gan_* source tag".into(),
        ));
    };
    if !index.is_split() {
        return Err(Error::InvalidArgument(
            "split the index before merging generated images".into(),
        ));
    }
    let mut dirs: Vec<_> = fs::read_dir(generated_dir)
        .map_err(|e| Error::io(generated_dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(generated_dir, e)))
        .collect::<Result<_>>()?;
    dirs.sort();

    let mut extra = Vec::new();
    for dir in dirs {
        let folder = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if !dir.is_dir() {
            return Err(Error::ClassMismatch {
                path: dir.clone(),
                expected: "a per-class folder".into(),
                reason: "generated sets must be laid out as <dir>/<Class>/*.png".into(),
            });
        }
        if let Some(only) = &options.classes {
            if !only.contains(&folder) {
                continue;
            }
        }
        if !index.class_set().contains(&folder) {
            return Err(Error::ClassMismatch {
                path: dir.clone(),
                expected: format!("one of {:?}", index.class_set().names()),
                reason: format!("unknown class folder {folder:?}"),
            });
        }
        let mut files: Vec<_> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(&dir, e)))
            .collect::<Result<_>>()?;
        files.retain(|p| p.file_name().and_then(|n| n.to_str()) != Some(PROVENANCE_FILE));
        files.sort();
        if let Some(limit) = options.per_class_limit {
            files.truncate(limit);
        }
        for path in files {
            if ImageFormat::from_path(&path) != Some(ImageFormat::Png) {
                return Err(Error::InvalidArgument(format!(
                    "{}: generated sets may only contain PNG files",
                    path.display()
                )));
            }
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            match parse_generated_name(name) {
                Some((class, file_kind, _)) if class == folder && file_kind == kind => {}
                Some((class, file_kind, _)) => {
                    return Err(Error::ClassMismatch {
                        path: path.clone(),
                        expected: format!("{folder}/{}", kind.as_str()),
                        reason: format!("file is named for {class}/{}", file_kind.as_str()),
                    })
                }
                None => {
                    return Err(Error::ClassMismatch {
                        path: path.clone(),
                        expected: folder.clone(),
                        reason: "name does not follow <class>_<gan>_NNNNN.png".into(),
                    })
                }
            }
            let (width, height) = check_decodable(&path)?;
            if width != GAN_IMAGE_SIZE || height != GAN_IMAGE_SIZE {
                return Err(Error::WrongSize {
                    path,
                    width,
                    height,
                    expected: GAN_IMAGE_SIZE,
                });
            }
            extra.push(ImageRecord {
                path,
                label: folder.clone(),
                source: source_tag,
                format: ImageFormat::Png,
            });
        }
    }
    index.with_appended_train(extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::index::split;
    use crate::data::record::{generated_file_name, ClassSet, Split};
    use crate::models::GanKind;
    use image::RgbImage;
    use std::path::PathBuf;

    fn base_index(classes: &[&str], per_class: usize) -> DatasetIndex {
        let class_set = ClassSet::new(classes).unwrap();
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
        split(&DatasetIndex::new(class_set, records).unwrap(), 0.75, 4).unwrap()
    }

    fn write_generated(root: &Path, class: &str, kind: GanKind, n: usize, size: u32) {
        let dir = root.join(class);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..n {
            RgbImage::new(size, size)
                .save(dir.join(generated_file_name(class, kind, i)))
                .unwrap();
        }
    }

    #[test]
    fn desk_corpus_grows_train_only() {
        let classes = [
            "AnnualCrop", "Forest", "HerbaceousVegetation", "Highway", "Industrial",
            "Pasture", "PermanentCrop", "Residential", "River", "SeaLake",
        ];
        let index = base_index(&classes, 27);
        let gen = tempfile::tempdir().unwrap();
        for c in classes {
            write_generated(gen.path(), c, GanKind::Dcgan, 26, 64);
        }
        let merged = merge_generated(&index, gen.path(), Source::GanDcgan).unwrap();
        assert_eq!(merged.len(), 270 + 260);
        assert_eq!(merged.count_in(Split::Train), index.count_in(Split::Train) + 260);
        assert_eq!(merged.count_in(Split::Val), index.count_in(Split::Val));
        assert_eq!(merged.count_by_source(Source::GanDcgan), 260);
        for i in 0..index.len() {
            assert_eq!(merged.records()[i], index.records()[i]);
            assert_eq!(merged.split_of(i), index.split_of(i));
        }
        assert_eq!(merged.class_counts()["Forest"], 27 + 26);
    }

    #[test]
    fn empty_generated_dir_is_identity() {
        let index = base_index(&["Forest"], 8);
        let gen = tempfile::tempdir().unwrap();
        let merged = merge_generated(&index, gen.path(), Source::GanWganGp).unwrap();
        assert_eq!(merged, index);
    }

    #[test]
    fn wrong_size_is_rejected() {
        let index = base_index(&["Forest"], 8);
        let gen = tempfile::tempdir().unwrap();
        write_generated(gen.path(), "Forest", GanKind::Dcgan, 1, 32);
        assert!(matches!(
            merge_generated(&index, gen.path(), Source::GanDcgan),
            Err(Error::WrongSize { width: 32, .. })
        ));
    }

    #[test]
    fn class_and_kind_mismatches_are_rejected() {
        let index = base_index(&["Forest", "River"], 8);
        let gen = tempfile::tempdir().unwrap();
        write_generated(gen.path(), "Forest", GanKind::WganGp, 1, 64);
        assert!(matches!(
            merge_generated(&index, gen.path(), Source::GanDcgan),
            Err(Error::ClassMismatch { .. })
        ));

        let gen = tempfile::tempdir().unwrap();
        write_generated(gen.path(), "Desert", GanKind::Dcgan, 1, 64);
        assert!(matches!(
            merge_generated(&index, gen.path(), Source::GanDcgan),
            Err(Error::ClassMismatch { .. })
        ));

        let gen = tempfile::tempdir().unwrap();
        let dir = gen.path().join("River");
        fs::create_dir_all(&dir).unwrap();
        RgbImage::new(64, 64)
            .save(dir.join(generated_file_name("Forest", GanKind::Dcgan, 0)))
            .unwrap();
        assert!(matches!(
            merge_generated(&index, gen.path(), Source::GanDcgan),
            Err(Error::ClassMismatch { .. })
        ));
    }

    #[test]
    fn options_restrict_classes_and_counts() {
        let index = base_index(&["Forest", "River"], 8);
        let gen = tempfile::tempdir().unwrap();
        for c in ["Forest", "River", "SeaLake"] {
            write_generated(gen.path(), c, GanKind::Dcgan, 5, 64);
        }
        let options = MergeOptions {
            classes: Some(vec!["Forest".into(), "River".into()]),
            per_class_limit: Some(2),
        };
        let merged = merge_generated_with(&index, gen.path(), Source::GanDcgan, &options).unwrap();
        assert_eq!(merged.len(), 16 + 4);
    }

    #[test]
    fn real_tag_is_rejected() {
        let index = base_index(&["Forest"], 4);
        let gen = tempfile::tempdir().unwrap();
        assert!(merge_generated(&index, gen.path(), Source::Real).is_err());
    }
}
