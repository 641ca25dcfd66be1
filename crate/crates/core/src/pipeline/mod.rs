//! Three-stage stacking protocol over several seeds, plus the standalone
//! commands behind the CLI.

mod commands;
mod config;
mod run;

pub use commands::{
    agreement_report, evaluate_files, majority_labels, majority_report, one_hot_predictions, read_splits, split_labels,
    write_splits, AgreementReport, AspectAgreement, FitOn, SplitsFile,
};
pub use config::{FamilyConfig, PipelineConfig, SourceKind, CONFIG_SCHEMA_VERSION, DEFAULT_SEEDS, SEED_PLACEHOLDER};
pub use run::{
    assemble_report, evaluate_prediction_set, run_pipeline, run_seed, FamilyAudit, PipelineInputs, PipelineOutcome,
    SeedAudit, SeedOutcome, StageCounts, TowerAudit, FAILURE_MARKER, MAJORITY_ID, MARKDOWN_FILE, REPORT_FILE,
};
