//! Append-only result store with per-cell claims.
//!
//! `results.jsonl` holds one JSON record per finished cell attempt. A cell
//! being executed owns `claims/<cell>.claim`, created exclusively; a claim
//! left behind by a dead process is taken over.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::plan::CellKey;
use crate::classifier::ExperimentResult;
use crate::error::{Error, Result};

pub const RESULTS_FILE: &str = "results.jsonl";
const CLAIMS_DIR: &str = "claims";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Completed { result: ExperimentResult },
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredCell {
    pub cell: CellKey,
    pub seed: u64,
    /// Fingerprint of the classifier configuration, empty if it never
    /// resolved.
    pub fingerprint: String,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

impl StoredCell {
    pub fn result(&self) -> Option<&ExperimentResult> {
        match &self.outcome {
            CellOutcome::Completed { result } => Some(result),
            CellOutcome::Failed { .. } => None,
        }
    }
}

pub struct ResultStore {
    dir: PathBuf,
    append: Mutex<()>,
}

impl ResultStore {
    pub fn open(dir: &Path) -> Result<Self> {
        let claims = dir.join(CLAIMS_DIR);
        fs::create_dir_all(&claims).map_err(|e| Error::io(&claims, e))?;
        Ok(ResultStore {
            dir: dir.to_path_buf(),
            append: Mutex::new(()),
        })
    }

    pub fn results_path(&self) -> PathBuf {
        self.dir.join(RESULTS_FILE)
    }

    /// Every stored record in append order. A torn final line (from a crash
    /// mid-write) is ignored.
    pub fn load(&self) -> Result<Vec<StoredCell>> {
        load_records(&self.results_path())
    }

    /// Latest completed record per cell.
    pub fn completed(&self) -> Result<BTreeMap<CellKey, StoredCell>> {
        let mut out = BTreeMap::new();
        for record in self.load()? {
            if record.result().is_some() {
                out.insert(record.cell, record);
            }
        }
        Ok(out)
    }

    pub fn append(&self, record: &StoredCell) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let path = self.results_path();
        let _guard = self.append.lock().unwrap_or_else(|p| p.into_inner());
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
        file.sync_data().map_err(|e| Error::io(&path, e))
    }

    fn claim_path(&self, cell: CellKey) -> PathBuf {
        self.dir.join(CLAIMS_DIR).join(format!("{}.claim", cell.id()))
    }

    /// Exclusively claims `cell`. Returns `None` if a live process holds it.
    pub fn claim(&self, cell: CellKey) -> Result<Option<Claim>> {
        let path = self.claim_path(cell);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut file) => {
                    writeln!(file, "{}", std::process::id()).map_err(|e| Error::io(&path, e))?;
                    return Ok(Some(Claim { path }));
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    if !claim_is_stale(&path) {
                        return Ok(None);
                    }
                    log::warn!("taking over stale claim {}", path.display());
                    match fs::remove_file(&path) {
                        Ok(()) => {}
                        Err(e) if e.kind() == ErrorKind::NotFound => {}
                        Err(e) => return Err(Error::io(&path, e)),
                    }
                }
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        Ok(None)
    }
}

pub fn load_records(path: &Path) -> Result<Vec<StoredCell>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(record) => out.push(record),
            Err(e) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("{}: ignoring torn last line: {e}", path.display());
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn claim_is_stale(path: &Path) -> bool {
    let Ok(text) = fs::read_to_string(path) else {
        return false;
    };
    match text.trim().parse::<u32>() {
        Ok(pid) if pid == std::process::id() => false,
        Ok(pid) => !Path::new("/proc").join(pid.to_string()).exists() && Path::new("/proc/self").exists(),
        // Still being written by its owner.
        Err(_) => false,
    }
}

/// Exclusive hold on one cell; released on drop.
pub struct Claim {
    path: PathBuf,
}

impl Drop for Claim {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
