//! Experiment runner: declarative config, staged pipeline, manifest and
//! report emission, dataset fetch.

mod config;
mod fetch;
mod manifest;
mod report;
mod run;

pub use config::{
    data_root, resolve_data_path, BalanceSettings, DatasetConfig, DatasetFormat, ExperimentConfig, SplitConfig,
    Strategy, ValidationMode, DATA_DIR_ENV, DEFAULT_HOLDOUT,
};
pub use fetch::{fetch, FetchOutcome};
pub use manifest::{sha256_file, DatasetChecksum, FailureInfo, RunManifest, StageTiming, MANIFEST_FILE, TOOLKIT_VERSION};
pub use report::{emit_report, render_report, row_order, ReportFormat, ReportRow};
pub use run::{collect_rows, row_for, run_experiment, strategy_plan, RunOptions, RunResult};
