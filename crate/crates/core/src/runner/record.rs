use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::accounting::CostBreakdown;
use crate::approach::{ApproachVariant, Outcome};

pub const RECORD_SCHEMA: &str = "repomine.record/v1";
pub const TRAJECTORY_SCHEMA: &str = "repomine.trajectory/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correctness {
    Correct,
    Incorrect,
    ExcludedError,
}

impl Correctness {
    /// Fatal failures are `excluded_error`; otherwise the prediction is
    /// compared with the ground truth.
    pub fn of(outcome: &Outcome, ground_truth: &str) -> Self {
        match (&outcome.failure, &outcome.predicted) {
            (Some(kind), _) if kind.is_fatal() => Correctness::ExcludedError,
            (_, Some(p)) if p == ground_truth => Correctness::Correct,
            _ => Correctness::Incorrect,
        }
    }
}

/// How failed experiments enter the accuracy model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPolicy {
    /// Failed experiments are left out of the likelihood.
    Exclude,
    /// Failed experiments count as incorrect.
    Fail,
}

impl ErrorPolicy {
    pub const BOTH: [ErrorPolicy; 2] = [ErrorPolicy::Exclude, ErrorPolicy::Fail];

    /// Observation value: `None` means missing.
    pub fn observe(self, c: Correctness) -> Option<bool> {
        match (c, self) {
            (Correctness::Correct, _) => Some(true),
            (Correctness::Incorrect, _) => Some(false),
            (Correctness::ExcludedError, ErrorPolicy::Exclude) => None,
            (Correctness::ExcludedError, ErrorPolicy::Fail) => Some(false),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorPolicy::Exclude => "exclude",
            ErrorPolicy::Fail => "fail",
        }
    }
}

impl fmt::Display for ErrorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exclude" => Ok(ErrorPolicy::Exclude),
            "fail" | "count_as_incorrect" => Ok(ErrorPolicy::Fail),
            other => Err(format!("unknown error policy '{other}' (expected exclude or fail)")),
        }
    }
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema: String,
    pub experiment_id: String,
    pub task_id: String,
    pub sample_id: String,
    pub variant: ApproachVariant,
    pub seed: u64,
    pub ground_truth: String,
    pub outcome: Outcome,
    pub correct: Correctness,
    pub cost: CostBreakdown,
    /// Path of the trajectory file, relative to the store root.
    pub trajectory_ref: String,
    pub started_at: String,
    pub finished_at: String,
}

impl ExperimentRecord {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.task_id, self.sample_id, self.variant.name())
    }
}

/// Remove wall-clock dependent fields (`*_at`, `wall_time*`) recursively, for
/// comparing runs.
pub fn strip_volatile(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|k, _| !(k.ends_with("_at") || k.starts_with("wall_time")));
            map.values_mut().for_each(strip_volatile);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}
