use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plan::CellKey;
use crate::classifier::{Augment, BackboneKind, DatasetVariant, ExperimentResult};
use crate::error::{Error, Result};

const BUNDLED_FIXTURES: &str = include_str!("../../fixtures/reference_results.toml");
pub const FIXTURE_VERSION: u32 = 1;

/// A published (epochs, accuracy) pair. Accuracy is percent text, kept as
/// printed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCell {
    pub epochs: usize,
    pub accuracy: String,
}

impl ReferenceCell {
    pub fn accuracy_pct(&self) -> Option<f64> {
        self.accuracy.trim().parse().ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub backbone: BackboneKind,
    pub augment: Augment,
    pub label: String,
    pub baseline: Option<ReferenceCell>,
    pub dcgan: Option<ReferenceCell>,
    #[serde(rename = "wgan-gp")]
    pub wgan_gp: Option<ReferenceCell>,
}

impl ReferenceRow {
    pub fn cell(&self, variant: DatasetVariant) -> Option<&ReferenceCell> {
        match variant {
            DatasetVariant::Baseline => self.baseline.as_ref(),
            DatasetVariant::DcganMerged => self.dcgan.as_ref(),
            DatasetVariant::WganGpMerged => self.wgan_gp.as_ref(),
        }
    }
}

/// An earlier published baseline next to its re-run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReproduction {
    pub backbone: BackboneKind,
    pub augment: Augment,
    pub label: String,
    pub published: ReferenceCell,
    pub rerun: ReferenceCell,
}

/// Reference values shown next to measured ones. Never used to judge runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixtures {
    pub version: u32,
    #[serde(default)]
    pub ablation: Vec<ReferenceRow>,
    #[serde(default)]
    pub baseline_reproduction: Vec<BaselineReproduction>,
}

impl Default for Fixtures {
    fn default() -> Self {
        Fixtures {
            version: FIXTURE_VERSION,
            ablation: Vec::new(),
            baseline_reproduction: Vec::new(),
        }
    }
}

impl Fixtures {
    /// The reference tables compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_FIXTURES).expect("bundled fixtures parse")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let fixtures: Fixtures = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if fixtures.version != FIXTURE_VERSION {
            return Err(Error::Config(format!(
                "unsupported fixture version {} (expected {FIXTURE_VERSION})",
                fixtures.version
            )));
        }
        Ok(fixtures)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn row(&self, backbone: BackboneKind, augment: Augment) -> Option<&ReferenceRow> {
        self.ablation.iter().find(|r| r.backbone == backbone && r.augment == augment)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measured {
    pub epochs: usize,
    pub accuracy_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportCell {
    pub variant: DatasetVariant,
    pub measured: Option<Measured>,
    pub reference: Option<ReferenceCell>,
}

impl ReportCell {
    /// Measured minus reference accuracy, in percentage points.
    pub fn delta_pct(&self) -> Option<f64> {
        Some(self.measured.as_ref()?.accuracy_pct - self.reference.as_ref()?.accuracy_pct()?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub backbone: BackboneKind,
    pub augment: Augment,
    pub label: String,
    /// One per variant, in column order.
    pub cells: Vec<ReportCell>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    pub reproduction: Vec<BaselineReproduction>,
}

fn default_label(backbone: BackboneKind, augment: Augment) -> String {
    let model = match backbone {
        BackboneKind::Vgg16 => "VGG16",
        BackboneKind::WideResnet50 => "Wide Resnet50",
    };
    let aug = match augment {
        Augment::None => "without",
        Augment::Geometric => "with",
    };
    format!("{model} {aug} augmentation")
}

fn pct(x: f64) -> String {
    format!("{x:.2}")
}

/// Lays measured results out by (backbone, augmentation) rows and variant
/// columns, next to the fixture values. When a cell was run more than once
/// the last result wins.
pub fn render_report(results: &[ExperimentResult], fixtures: &Fixtures) -> ReportTable {
    let mut measured: BTreeMap<CellKey, Measured> = BTreeMap::new();
    for r in results {
        let key = CellKey {
            backbone: r.backbone,
            augment: r.augment,
            variant: r.variant,
        };
        measured.insert(
            key,
            Measured {
                epochs: r.epochs_run,
                accuracy_pct: r.best_val_accuracy * 100.0,
            },
        );
    }
    let mut rows = Vec::new();
    for backbone in BackboneKind::ALL {
        for augment in Augment::ALL {
            let reference = fixtures.row(backbone, augment);
            let cells: Vec<ReportCell> = DatasetVariant::ALL
                .into_iter()
                .map(|variant| ReportCell {
                    variant,
                    measured: measured
                        .get(&CellKey {
                            backbone,
                            augment,
                            variant,
                        })
                        .cloned(),
                    reference: reference.and_then(|r| r.cell(variant)).cloned(),
                })
                .collect();
            if cells.iter().all(|c| c.measured.is_none() && c.reference.is_none()) {
                continue;
            }
            rows.push(ReportRow {
                backbone,
                augment,
                label: reference.map_or_else(|| default_label(backbone, augment), |r| r.label.clone()),
                cells,
            });
        }
    }
    ReportTable {
        rows,
        reproduction: fixtures.baseline_reproduction.clone(),
    }
}

impl ReportTable {
    pub fn has_reference(&self) -> bool {
        self.rows.iter().flat_map(|r| &r.cells).any(|c| c.reference.is_some())
    }

    pub fn cell(&self, key: CellKey) -> Option<&ReportCell> {
        self.rows
            .iter()
            .find(|r| r.backbone == key.backbone && r.augment == key.augment)?
            .cells
            .iter()
            .find(|c| c.variant == key.variant)
    }

    /// One line per (row, variant). Reference columns appear only when
    /// fixtures supplied any values.
    pub fn to_csv(&self) -> String {
        let with_ref = self.has_reference();
        let mut out = String::from("backbone,augment,variant,epochs,accuracy_pct");
        if with_ref {
            out.push_str(",reference_epochs,reference_accuracy_pct,delta_pct");
        }
        out.push('\n');
        for row in &self.rows {
            for cell in &row.cells {
                if cell.measured.is_none() && cell.reference.is_none() {
                    continue;
                }
                let (epochs, acc) = cell
                    .measured
                    .as_ref()
                    .map_or((String::new(), String::new()), |m| (m.epochs.to_string(), pct(m.accuracy_pct)));
                write!(out, "{},{},{},{epochs},{acc}", row.backbone, row.augment, cell.variant).unwrap();
                if with_ref {
                    let (re, ra) = cell
                        .reference
                        .as_ref()
                        .map_or((String::new(), String::new()), |r| (r.epochs.to_string(), r.accuracy.clone()));
                    let delta = cell.delta_pct().map(|d| format!("{d:+.2}")).unwrap_or_default();
                    write!(out, ",{re},{ra},{delta}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    /// Fixed-width table with one column group per dataset variant.
    pub fn to_table(&self) -> String {
        let with_ref = self.has_reference();
        let label_w = self
            .rows
            .iter()
            .map(|r| r.label.len() + 2)
            .chain([34])
            .max()
            .unwrap_or(34);
        let group = |a: &str, b: &str| format!(" | {a:>6} {b:>9}");
        let mut out = String::new();
        write!(out, "{:label_w$}", "Model").unwrap();
        for v in ["Baseline", "DCGAN", "WGAN-GP"] {
            write!(out, " | {v:<16}").unwrap();
        }
        out.push('\n');
        write!(out, "{:label_w$}", "").unwrap();
        for _ in 0..3 {
            out.push_str(&group("Epochs", "Accuracy"));
        }
        out.push('\n');
        out.push_str(&"-".repeat(label_w + 3 * 19));
        out.push('\n');
        for row in &self.rows {
            write!(out, "{:label_w$}", row.label).unwrap();
            for c in &row.cells {
                match &c.measured {
                    Some(m) => out.push_str(&group(&m.epochs.to_string(), &format!("{}%", pct(m.accuracy_pct)))),
                    None => out.push_str(&group("-", "-")),
                }
            }
            out.push('\n');
            if with_ref {
                write!(out, "{:label_w$}", "  reference").unwrap();
                for c in &row.cells {
                    match &c.reference {
                        Some(r) => out.push_str(&group(&r.epochs.to_string(), &format!("{}%", r.accuracy))),
                        None => out.push_str(&group("-", "-")),
                    }
                }
                out.push('\n');
                write!(out, "{:label_w$}", "  delta (points)").unwrap();
                for c in &row.cells {
                    let d = c.delta_pct().map(|d| format!("{d:+.2}")).unwrap_or_else(|| "-".into());
                    out.push_str(&group("", &d));
                }
                out.push('\n');
            }
        }
        if !self.reproduction.is_empty() {
            out.push('\n');
            writeln!(out, "{:label_w$} | {:>16} | {:>16}", "Baseline reproduction", "published", "re-run").unwrap();
            for r in &self.reproduction {
                writeln!(
                    out,
                    "{:label_w$} | {:>6} {:>9} | {:>6} {:>9}",
                    r.label,
                    r.published.epochs,
                    format!("{}%", r.published.accuracy),
                    r.rerun.epochs,
                    format!("{}%", r.rerun.accuracy)
                )
                .unwrap();
            }
        }
        out
    }
}
