use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::plan::{AblationPlan, CellKey};
use super::store::{CellOutcome, ResultStore, StoredCell};
use super::variants::{build_generated, build_variants, missing_kinds, prepare_baseline, VariantSet, FULL_GENERATED_PER_CLASS};
use crate::classifier::{train_classifier, ClassifierTrainConfig, ExperimentResult};
use crate::data::DatasetIndex;
use crate::error::{Error, Result};

/// Executes one cell on its dataset variant.
pub trait CellRunner: Sync {
    fn run_cell(&self, key: CellKey, config: &ClassifierTrainConfig, index: &DatasetIndex) -> Result<ExperimentResult>;
}

pub struct ClassifierCellRunner;

impl CellRunner for ClassifierCellRunner {
    fn run_cell(&self, key: CellKey, config: &ClassifierTrainConfig, index: &DatasetIndex) -> Result<ExperimentResult> {
        train_classifier(index, config, key.variant).map(|(result, _)| result)
    }
}

#[derive(Clone, Debug)]
pub struct CellReport {
    pub cell: CellKey,
    pub seed: u64,
    /// Loaded from the store instead of executed.
    pub reused: bool,
    pub outcome: std::result::Result<ExperimentResult, String>,
}

#[derive(Clone, Debug, Default)]
pub struct AblationOutcome {
    /// Plan order. Cells claimed by another process are absent.
    pub cells: Vec<CellReport>,
}

impl AblationOutcome {
    pub fn results(&self) -> Vec<&ExperimentResult> {
        self.cells.iter().filter_map(|c| c.outcome.as_ref().ok()).collect()
    }

    pub fn failures(&self) -> Vec<(CellKey, &str)> {
        self.cells
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (c.cell, e.as_str())))
            .collect()
    }

    pub fn executed(&self) -> usize {
        self.cells.iter().filter(|c| !c.reused).count()
    }
}

/// Where an ablation reads and writes.
#[derive(Clone, Debug)]
pub struct AblationPaths {
    pub data_root: PathBuf,
    pub generated_root: PathBuf,
    pub out: PathBuf,
}

impl AblationPaths {
    /// Resolves paths from the plan, with `data_root` overriding the plan's.
    pub fn resolve(plan: &AblationPlan, data_root: Option<&Path>, out: &Path) -> Result<Self> {
        let data_root = data_root
            .map(Path::to_path_buf)
            .or_else(|| plan.data_root.clone())
            .ok_or_else(|| Error::Config("no data root given in the plan or on the command line".into()))?;
        Ok(AblationPaths {
            data_root,
            generated_root: plan.generated_root.clone().unwrap_or_else(|| out.join("generated")),
            out: out.to_path_buf(),
        })
    }

    pub fn manifests(&self) -> PathBuf {
        self.out.join("manifests")
    }
}

/// Builds the dataset variants a plan needs, training GANs for missing
/// generated sets when the plan allows it, and writes their manifests.
pub fn prepare_variants(plan: &AblationPlan, paths: &AblationPaths) -> Result<VariantSet> {
    let baseline = prepare_baseline(plan, &paths.data_root)?;
    let needed = plan.needed_variants();
    let limit = plan.generated_per_class();
    if let Some(build) = &plan.build_generated {
        let per_class = limit.unwrap_or(FULL_GENERATED_PER_CLASS);
        for kind in missing_kinds(&baseline, &paths.generated_root, &needed, per_class) {
            build_generated(&baseline, kind, build, per_class, &paths.generated_root, &paths.out.join("gan_runs"))?;
        }
    }
    let variants = build_variants(&baseline, &paths.generated_root, &needed, limit)?;
    variants.write_manifests(&paths.manifests())?;
    Ok(variants)
}

/// Runs every cell of `plan` not already completed in `<out>/results.jsonl`.
///
/// Completed cells are reused when their configuration fingerprint still
/// matches. A failing cell is recorded and the others continue. Up to
/// `plan.parallelism` cells run at once.
pub fn run_ablation(
    plan: &AblationPlan,
    paths: &AblationPaths,
    runner: &dyn CellRunner,
) -> Result<AblationOutcome> {
    plan.validate()?;
    let variants = prepare_variants(plan, paths)?;
    let store = ResultStore::open(&paths.out)?;
    let done = store.completed()?;
    let cells = plan.resolved_cells();

    let mut reports: Vec<Option<CellReport>> = vec![None; cells.len()];
    let mut pending = Vec::new();
    for (i, (key, seed)) in cells.iter().copied().enumerate() {
        let config = plan.cell_config(key, seed);
        let fingerprint = config.as_ref().map(|c| c.fingerprint()).unwrap_or_default();
        match done.get(&key) {
            Some(stored) if stored.seed == seed && stored.fingerprint == fingerprint => {
                reports[i] = Some(CellReport {
                    cell: key,
                    seed,
                    reused: true,
                    outcome: Ok(stored.result().cloned().expect("completed records carry a result")),
                });
            }
            _ => pending.push((i, key, seed, config)),
        }
    }

    let next = AtomicUsize::new(0);
    let finished = Mutex::new(Vec::new());
    let workers = plan.parallelism.min(pending.len()).max(1);
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| -> Result<()> {
                    loop {
                        let n = next.fetch_add(1, Ordering::SeqCst);
                        let Some((i, key, seed, config)) = pending.get(n) else {
                            return Ok(());
                        };
                        let Some(_claim) = store.claim(*key)? else {
                            log::warn!("cell {key} is claimed by another process; skipping");
                            continue;
                        };
                        log::info!("running cell {key} (seed {seed})");
                        let (fingerprint, outcome) = match config {
                            Ok(config) => {
                                let index = variants.get(key.variant)?;
                                let run = runner.run_cell(*key, config, index);
                                (config.fingerprint(), run.map_err(|e| e.to_string()))
                            }
                            Err(e) => (String::new(), Err(e.to_string())),
                        };
                        if let Err(e) = &outcome {
                            log::error!("cell {key} failed: {e}");
                        }
                        store.append(&StoredCell {
                            cell: *key,
                            seed: *seed,
                            fingerprint,
                            outcome: match &outcome {
                                Ok(result) => CellOutcome::Completed { result: result.clone() },
                                Err(error) => CellOutcome::Failed { error: error.clone() },
                            },
                        })?;
                        finished.lock().unwrap_or_else(|p| p.into_inner()).push((
                            *i,
                            CellReport {
                                cell: *key,
                                seed: *seed,
                                reused: false,
                                outcome,
                            },
                        ));
                    }
                })
            })
            .collect();
        for handle in handles {
            handle.join().expect("ablation worker panicked")?;
        }
        Ok(())
    })?;
    for (i, report) in finished.into_inner().unwrap_or_else(|p| p.into_inner()) {
        reports[i] = Some(report);
    }
    Ok(AblationOutcome {
        cells: reports.into_iter().flatten().collect(),
    })
}

/// Latest completed result per cell from a results directory, in the
/// order cells first appear.
pub fn load_results(dir: &Path) -> Result<Vec<ExperimentResult>> {
    let path = if dir.is_dir() { dir.join(super::store::RESULTS_FILE) } else { dir.to_path_buf() };
    let mut order = Vec::new();
    let mut latest: BTreeMap<CellKey, ExperimentResult> = BTreeMap::new();
    for record in super::store::load_records(&path)? {
        if let Some(result) = record.result() {
            if latest.insert(record.cell, result.clone()).is_none() {
                order.push(record.cell);
            }
        }
    }
    Ok(order.into_iter().filter_map(|k| latest.remove(&k)).collect())
}
