//! Experiment orchestration: configuration, on-disk layout, the run ledger
//! and the commands behind the `gando` binary.

mod commands;
mod config;
mod ledger;
mod report;

pub use commands::{cmd_distort, cmd_evaluate, cmd_generate_data, cmd_report, cmd_train, model_name, Context};
pub use config::{ExperimentConfig, OUTPUT_ROOT_ENV, SUITES};
pub use ledger::{append_run, provenance, read_runs, RunRecord};
pub use report::{ReportRow, SuiteReport};
