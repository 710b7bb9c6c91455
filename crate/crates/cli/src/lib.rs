//! Configuration, commands and report writers behind the `robustdrift` binary.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{
    cmd_filter, cmd_simulate, cmd_solve, cmd_study, study_csv, SolveReport, StudyBundle,
};
pub use config::{parse_config, parse_config_str, DriftRun, Overrides, RunConfig, ValidatedRun};
pub use error::{CliError, Result};
