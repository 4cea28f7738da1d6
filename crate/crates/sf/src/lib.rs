//! File formats, experiment driver and command-line front end for `carnot-core`.
//!
//! Experiments are described by JSON [`ExperimentSpec`]s and produce CSV and
//! JSON outputs only. Reports embed the spec, the tool version and every
//! tolerance they were judged against, and never contain timestamps, so
//! identical specs give byte-identical reports.

// `!(x <= tol)` is used on purpose: NaN must fail every check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod io;
pub mod parallel;
pub mod report;
pub mod suite;

pub use config::{resolve_group, resolve_norm, GroupRef, NormRef, ResolvedNorm};
pub use experiments::{run_experiment, ExperimentSpec, Experiment, Outcome};
pub use suite::{run_suite, Check, SuiteParams, SuiteReport};

pub const TOOL_NAME: &str = "carnot-sf";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum SfError {
    #[error(transparent)]
    Core(#[from] carnot_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Spec(String),
}

pub type Result<T, E = SfError> = std::result::Result<T, E>;
