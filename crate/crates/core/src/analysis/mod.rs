//! Report builders over stored experiment records.

mod confusion;
mod disagreement;
mod resources;
mod tools;
mod triage;

pub use confusion::{unclear_confusion, UnclearConfusion};
pub use disagreement::{
    find_disagreements, is_eligible, largest_remainder, stratified_sample, DisagreementCase,
    DEFAULT_MIN_DISAGREE,
};
pub use resources::{resource_report, steps_per_task, ResourceRow, StepsRow};
pub use tools::{tool_usage, CommandStats};
pub use triage::{
    run_triage, verdict_summary, Diagnosis, DiagnosisStore, TriageError, Verdict, VerdictSummary,
};
