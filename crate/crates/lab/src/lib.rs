//! Scenario runner for backlab: configuration schema, scenario registry,
//! persistence, parallel parameter sweeps, reports and the acceptance suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
pub mod persist;
pub mod report;
pub mod scenarios;
pub mod sweep;

pub use config::{ScenarioConfig, ScenarioId};
pub use persist::{run_and_persist, RunManifest};
pub use report::{emit_report, ReportBundle};
pub use scenarios::{run_scenario, Check, Outcome, Series};
pub use sweep::{run_sweep, SweepReport, SweepSpec};

/// Exit code when every check passed.
pub const EXIT_OK: i32 = 0;
/// Exit code when at least one acceptance check failed.
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("run failed: {0}")]
    Run(#[from] backlab_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("missing artifact: {0}")]
    Missing(String),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}
