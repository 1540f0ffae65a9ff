//! Planning, executing and persisting the experiment grid.

mod execute;
mod plan;
mod record;
mod store;

use thiserror::Error;

pub use execute::{RunSummary, Runner, RunnerConfig};
pub use plan::{plan, sub_seed, Exclusion, ExclusionReason, ExperimentPlan, Filters, PlanEntry};
pub use record::{strip_volatile, Correctness, ErrorPolicy, ExperimentRecord, RECORD_SCHEMA, TRAJECTORY_SCHEMA};
pub use store::{CorruptRecord, ResumeState, Store, StoredTrajectory};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("store: {0}")]
    Store(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("backend: {0}")]
    Backend(#[from] crate::gateway::GatewayError),
    #[error("sandbox: {0}")]
    Sandbox(#[from] crate::sandbox::SandboxError),
    #[error("accounting: {0}")]
    Accounting(#[from] crate::accounting::AccountingError),
    #[error("approach: {0}")]
    Approach(#[from] crate::approach::ApproachError),
}

impl From<std::io::Error> for RunnerError {
    fn from(e: std::io::Error) -> Self {
        RunnerError::Store(e.to_string())
    }
}
