use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::GanKind;

/// The ten EuroSAT RGB classes, in the canonical order used for label indices.
pub const EUROSAT_CLASSES: [&str; 10] = [
    "AnnualCrop",
    "Forest",
    "HerbaceousVegetation",
    "Highway",
    "Industrial",
    "Pasture",
    "PermanentCrop",
    "Residential",
    "River",
    "SeaLake",
];

/// Where an image came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Real,
    GanDcgan,
    GanWganGp,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Real => "real",
            Source::GanDcgan => "gan_dcgan",
            Source::GanWganGp => "gan_wgan_gp",
        }
    }

    /// Real images ship as JPEG, generated ones as PNG.
    pub fn expected_format(self) -> ImageFormat {
        match self {
            Source::Real => ImageFormat::Jpg,
            Source::GanDcgan | Source::GanWganGp => ImageFormat::Png,
        }
    }

    pub fn gan_kind(self) -> Option<GanKind> {
        match self {
            Source::Real => None,
            Source::GanDcgan => Some(GanKind::Dcgan),
            Source::GanWganGp => Some(GanKind::WganGp),
        }
    }
}

impl From<GanKind> for Source {
    fn from(kind: GanKind) -> Self {
        match kind {
            GanKind::Dcgan => Source::GanDcgan,
            GanKind::WganGp => Source::GanWganGp,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Source::Real),
            "gan_dcgan" => Ok(Source::GanDcgan),
            "gan_wgan_gp" => Ok(Source::GanWganGp),
            other => Err(Error::InvalidArgument(format!("unknown source {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    Jpg,
    Png,
}

impl ImageFormat {
    /// Format implied by the file extension, `None` for non-image files.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "jpg" | "jpeg" => Some(ImageFormat::Jpg),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub label: String,
    pub source: Source,
    pub format: ImageFormat,
}

/// Ordered set of class names; a label's index is its position here.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSet(Vec<String>);

impl ClassSet {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut out: Vec<String> = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            if name.is_empty() || name.contains(['/', '\\', '_']) {
                return Err(Error::InvalidArgument(format!(
                    "invalid class name {name:?} (must be non-empty, without '/' or '_')"
                )));
            }
            if out.iter().any(|n| n == name) {
                return Err(Error::InvalidArgument(format!("duplicate class {name:?}")));
            }
            out.push(name.to_string());
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("class set is empty".into()));
        }
        Ok(ClassSet(out))
    }

    pub fn eurosat() -> Self {
        ClassSet(EUROSAT_CLASSES.iter().map(|s| s.to_string()).collect())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.iter().any(|n| n == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for ClassSet {
    fn default() -> Self {
        Self::eurosat()
    }
}

/// File name written for generated images: `<class>_<gan_kind>_<index>.png`.
pub fn generated_file_name(class: &str, kind: GanKind, index: usize) -> String {
    format!("{class}_{}_{index:05}.png", kind.as_str())
}

/// Inverse of [`generated_file_name`]; `None` if the name does not follow it.
pub fn parse_generated_name(file_name: &str) -> Option<(String, GanKind, usize)> {
    let stem = file_name.strip_suffix(".png")?;
    let (rest, index) = stem.rsplit_once('_')?;
    if index.len() != 5 || !index.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let (class, kind) = rest.split_once('_')?;
    let kind = kind.parse::<GanKind>().ok()?;
    Some((class.to_string(), kind, index.parse().ok()?))
}

/// Label prefix of a flat-layout file name such as `AnnualCrop_17.jpg`.
pub fn label_from_file_name(file_name: &str) -> Option<&str> {
    let (prefix, _) = file_name.split_once('_')?;
    (!prefix.is_empty()).then_some(prefix)
}
