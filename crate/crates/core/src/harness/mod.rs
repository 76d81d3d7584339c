//! The classification ablation: plans, dataset variants, resumable
//! execution and reports.

mod plan;
mod report;
mod runner;
mod store;
mod variants;

pub use plan::{
    AblationPlan, CellKey, CellSpec, DeskScale, GanBuild, TrainingOverrides, GENERATED_FRACTION, PLAN_VERSION,
};
pub use report::{
    render_report, BaselineReproduction, Fixtures, Measured, ReferenceCell, ReferenceRow, ReportCell, ReportRow,
    ReportTable, FIXTURE_VERSION,
};
pub use runner::{
    load_results, prepare_variants, run_ablation, AblationOutcome, AblationPaths, CellReport, CellRunner,
    ClassifierCellRunner,
};
pub use store::{load_records, CellOutcome, Claim, ResultStore, StoredCell, RESULTS_FILE};
pub use variants::{
    build_generated, build_variants, generated_dir, missing_kinds, prepare_baseline, VariantSet, VariantStats,
    FULL_GENERATED_PER_CLASS,
};
