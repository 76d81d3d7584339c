use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::record::{
    label_from_file_name, parse_generated_name, ClassSet, ImageFormat, ImageRecord, Source, Split,
};
use crate::error::{Error, Result};
use crate::rng;

/// Default train fraction (3:1 train/validation).
pub const DEFAULT_TRAIN_RATIO: f64 = 0.75;

/// Catalog of labeled images with optional train/validation assignment.
///
/// Records are immutable once indexed; operations that change membership
/// return a new index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    class_set: ClassSet,
    records: Vec<ImageRecord>,
    splits: Vec<Option<Split>>,
    seed: Option<u64>,
    class_counts: BTreeMap<String, usize>,
}

impl DatasetIndex {
    /// Builds an unsplit index, ordering records lexicographically by path.
    pub fn new(class_set: ClassSet, mut records: Vec<ImageRecord>) -> Result<Self> {
        for record in &records {
            validate_record(&class_set, record)?;
        }
        records.sort_by(|a, b| a.path.cmp(&b.path));
        let splits = vec![None; records.len()];
        Ok(Self::assemble(class_set, records, splits, None))
    }

    fn assemble(
        class_set: ClassSet,
        records: Vec<ImageRecord>,
        splits: Vec<Option<Split>>,
        seed: Option<u64>,
    ) -> Self {
        let mut class_counts = BTreeMap::new();
        for record in &records {
            *class_counts.entry(record.label.clone()).or_insert(0) += 1;
        }
        DatasetIndex {
            class_set,
            records,
            splits,
            seed,
            class_counts,
        }
    }

    pub fn class_set(&self) -> &ClassSet {
        &self.class_set
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn class_counts(&self) -> &BTreeMap<String, usize> {
        &self.class_counts
    }

    pub fn split_of(&self, i: usize) -> Option<Split> {
        self.splits.get(i).copied().flatten()
    }

    pub fn is_split(&self) -> bool {
        !self.records.is_empty() && self.splits.iter().all(Option::is_some)
    }

    /// Classes with at least one record, in class-set order.
    pub fn classes_present(&self) -> Vec<String> {
        self.class_set
            .names()
            .iter()
            .filter(|c| self.class_counts.contains_key(*c))
            .cloned()
            .collect()
    }

    pub fn records_in(&self, split: Split) -> Vec<&ImageRecord> {
        self.records
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == Some(split))
            .map(|(r, _)| r)
            .collect()
    }

    pub fn count_in(&self, split: Split) -> usize {
        self.splits.iter().filter(|s| **s == Some(split)).count()
    }

    pub fn count_in_class(&self, split: Split, class: &str) -> usize {
        self.records
            .iter()
            .zip(&self.splits)
            .filter(|(r, s)| **s == Some(split) && r.label == class)
            .count()
    }

    pub fn count_by_source(&self, source: Source) -> usize {
        self.records.iter().filter(|r| r.source == source).count()
    }

    /// Records of a single class, in index order.
    pub fn class_records(&self, class: &str) -> Vec<&ImageRecord> {
        self.records.iter().filter(|r| r.label == class).collect()
    }

    /// Keeps the first `per_class` records (in path order) of each listed
    /// class and drops split assignments. The class set of the result is
    /// restricted to `classes`.
    pub fn subset(&self, classes: &[String], per_class: Option<usize>) -> Result<Self> {
        for class in classes {
            if !self.class_set.contains(class) {
                return Err(Error::UnknownClass(class.clone()));
            }
        }
        let class_set = ClassSet::new(classes)?;
        let mut records = Vec::new();
        for class in classes {
            let members: Vec<&ImageRecord> = self.class_records(class);
            if members.is_empty() {
                return Err(Error::EmptyClass(class.clone()));
            }
            if let Some(n) = per_class {
                if members.len() < n {
                    return Err(Error::InvalidArgument(format!(
                        "class {class:?} has {} records, {n} requested",
                        members.len()
                    )));
                }
            }
            let take = per_class.unwrap_or(members.len());
            records.extend(members.into_iter().take(take).cloned());
        }
        DatasetIndex::new(class_set, records)
    }

    /// Appends train-only records; existing records and assignments are untouched.
    pub(crate) fn with_appended_train(&self, extra: Vec<ImageRecord>) -> Result<Self> {
        for record in &extra {
            validate_record(&self.class_set, record)?;
        }
        let mut records = self.records.clone();
        let mut splits = self.splits.clone();
        splits.extend(std::iter::repeat_n(Some(Split::Train), extra.len()));
        records.extend(extra);
        Ok(Self::assemble(
            self.class_set.clone(),
            records,
            splits,
            self.seed,
        ))
    }

    /// One `path,label,split,source` line per record.
    pub fn manifest_lines(&self) -> Vec<String> {
        self.records
            .iter()
            .zip(&self.splits)
            .map(|(r, s)| {
                format!(
                    "{},{},{},{}",
                    r.path.display(),
                    r.label,
                    s.map_or("unassigned", Split::as_str),
                    r.source
                )
            })
            .collect()
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for line in self.manifest_lines() {
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn validate_record(class_set: &ClassSet, record: &ImageRecord) -> Result<()> {
    if !class_set.contains(&record.label) {
        return Err(Error::UnknownClass(record.label.clone()));
    }
    if record.format != record.source.expected_format() {
        return Err(Error::InvalidArgument(format!(
            "{}: source {} requires {:?} files",
            record.path.display(),
            record.source,
            record.source.expected_format()
        )));
    }
    Ok(())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn source_for(path: &Path, format: ImageFormat) -> Result<Source> {
    match format {
        ImageFormat::Jpg => Ok(Source::Real),
        ImageFormat::Png => {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            parse_generated_name(name)
                .map(|(_, kind, _)| Source::from(kind))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "{}: PNG files must be generated images named <class>_<gan>_NNNNN.png",
                        path.display()
                    ))
                })
        }
    }
}

pub(crate) fn check_decodable(path: &Path) -> Result<(u32, u32)> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok((img.width(), img.height()))
}

/// Indexes `<root>/<Class>/*.{jpg,png}`; files placed directly in `root`
/// are labeled by their file-name prefix (`<Class>_<n>.jpg`).
pub fn scan_dataset(root: &Path, class_set: &ClassSet) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
        ));
    }
    let mut candidates: Vec<(PathBuf, String, ImageFormat)> = Vec::new();
    for entry in sorted_entries(root)? {
        let name = entry
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if entry.is_dir() {
            if !class_set.contains(&name) {
                return Err(Error::UnknownClass(name));
            }
            let mut found = 0usize;
            for file in sorted_entries(&entry)? {
                if let (true, Some(format)) = (file.is_file(), ImageFormat::from_path(&file)) {
                    candidates.push((file, name.clone(), format));
                    found += 1;
                }
            }
            if found == 0 {
                return Err(Error::EmptyClass(name));
            }
        } else if let Some(format) = ImageFormat::from_path(&entry) {
            let label = label_from_file_name(&name)
                .filter(|l| class_set.contains(l))
                .ok_or_else(|| Error::UnknownClass(name.clone()))?
                .to_string();
            candidates.push((entry, label, format));
        }
    }

    let records = candidates
        .into_par_iter()
        .map(|(path, label, format)| {
            let source = source_for(&path, format)?;
            check_decodable(&path)?;
            Ok(ImageRecord {
                path,
                label,
                source,
                format,
            })
        })
        .collect::<Vec<Result<ImageRecord>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    DatasetIndex::new(class_set.clone(), records)
}

/// Number of training records for a class of `n` under `ratio`, keeping at
/// least one record on each side.
pub fn train_count(n: usize, ratio: f64) -> usize {
    let target = (ratio * n as f64).round() as usize;
    target.clamp(1, n.saturating_sub(1).max(1))
}

/// Per-class stratified train/validation assignment.
///
/// Generated records are always assigned to train; real records of each
/// class are shuffled with a stream derived from `(seed, class)` and the
/// first `round(ratio * n)` go to train.
pub fn split(index: &DatasetIndex, ratio: f64, seed: u64) -> Result<DatasetIndex> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut splits: Vec<Option<Split>> = index
        .records
        .iter()
        .map(|r| (r.source != Source::Real).then_some(Split::Train))
        .collect();

    for class in index.class_set.names() {
        let mut members: Vec<usize> = index
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| &r.label == class && r.source == Source::Real)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::TooFewToStratify {
                class: class.clone(),
                count: members.len(),
            });
        }
        let mut rng = rng::stream(seed, &["split", class]);
        members.shuffle(&mut rng);
        let n_train = train_count(members.len(), ratio);
        for (rank, i) in members.into_iter().enumerate() {
            splits[i] = Some(if rank < n_train { Split::Train } else { Split::Val });
        }
    }
    Ok(DatasetIndex::assemble(
        index.class_set.clone(),
        index.records.clone(),
        splits,
        Some(seed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fake_index(per_class: &[(&str, usize)]) -> DatasetIndex {
        let names: Vec<&str> = per_class.iter().map(|(c, _)| *c).collect();
        let class_set = ClassSet::new(&names).unwrap();
        let mut records = Vec::new();
        for (class, n) in per_class {
            for i in 0..*n {
                records.push(ImageRecord {
                    path: PathBuf::from(format!("/data/{class}/{class}_{i}.jpg")),
                    label: class.to_string(),
                    source: Source::Real,
                    format: ImageFormat::Jpg,
                });
            }
        }
        DatasetIndex::new(class_set, records).unwrap()
    }

    #[test]
    fn eurosat_scale_split_counts() {
        // Real EuroSAT class sizes (27000 in total).
        let sizes = [
            ("AnnualCrop", 3000),
            ("Forest", 3000),
            ("HerbaceousVegetation", 3000),
            ("Highway", 2500),
            ("Industrial", 2500),
            ("Pasture", 2000),
            ("PermanentCrop", 2500),
            ("Residential", 3000),
            ("River", 2500),
            ("SeaLake", 3000),
        ];
        let index = fake_index(&sizes);
        assert_eq!(index.len(), 27000);
        let split = split(&index, 0.75, 3).unwrap();
        assert_eq!(split.count_in(Split::Train), 20250);
        assert_eq!(split.count_in(Split::Val), 6750);
    }

    #[test]
    fn four_records_split_three_to_one() {
        let index = fake_index(&[("Forest", 4)]);
        let split = split(&index, 0.75, 11).unwrap();
        assert_eq!(split.count_in(Split::Train), 3);
        assert_eq!(split.count_in(Split::Val), 1);
    }

    #[test]
    fn singleton_class_cannot_be_stratified() {
        let index = fake_index(&[("Forest", 4), ("River", 1)]);
        match split(&index, 0.75, 0) {
            Err(Error::TooFewToStratify { class, count }) => {
                assert_eq!(class, "River");
                assert_eq!(count, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ratio_bounds_are_checked() {
        let index = fake_index(&[("Forest", 4)]);
        assert!(split(&index, 0.0, 0).is_err());
        assert!(split(&index, 1.0, 0).is_err());
    }

    #[test]
    fn manifest_line_format() {
        let index = fake_index(&[("Forest", 2)]);
        let split = split(&index, 0.5, 1).unwrap();
        let lines = split.manifest_lines();
        assert_eq!(lines.len(), 2);
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 4);
            assert_eq!(fields[1], "Forest");
            assert!(fields[2] == "train" || fields[2] == "val");
            assert_eq!(fields[3], "real");
        }
    }

    #[test]
    fn subset_takes_leading_records_per_class() {
        let index = fake_index(&[("Forest", 5), ("River", 6), ("SeaLake", 2)]);
        let sub = index
            .subset(&["River".to_string(), "Forest".to_string()], Some(3))
            .unwrap();
        assert_eq!(sub.len(), 6);
        assert_eq!(sub.class_counts()["River"], 3);
        assert_eq!(sub.classes_present(), vec!["River", "Forest"]);
        assert!(index.subset(&["SeaLake".to_string()], Some(3)).is_err());
    }

    proptest! {
        #[test]
        fn split_is_stratified_disjoint_and_reproducible(
            sizes in proptest::collection::vec(2usize..60, 1..5),
            ratio in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            let names = ["A", "B", "C", "D", "E"];
            let spec: Vec<(&str, usize)> = sizes.iter().enumerate().map(|(i, n)| (names[i], *n)).collect();
            let index = fake_index(&spec);
            let a = split(&index, ratio, seed).unwrap();
            let b = split(&index, ratio, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.is_split());
            prop_assert_eq!(a.count_in(Split::Train) + a.count_in(Split::Val), index.len());
            for (class, n) in &spec {
                let train = a.count_in_class(Split::Train, class) as f64;
                let frac = train / *n as f64;
                let tol = 1.0 / *n as f64 + 1e-12;
                prop_assert!((frac - ratio).abs() <= tol, "class {} frac {} ratio {}", class, frac, ratio);
            }
        }
    }

    #[test]
    fn stratification_band_for_default_ratio() {
        for n in 2..200usize {
            let t = train_count(n, 0.75) as f64 / n as f64;
            assert!((t - 0.75).abs() <= 1.0 / n as f64 + 1e-12, "n={n} frac={t}");
        }
    }
}
