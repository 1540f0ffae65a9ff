//! Classification approaches: single-turn variants and the tool-using agent loop.
//!
//! Every approach kind implements [`Approach`] and is registered by name in an
//! [`ApproachRegistry`]; the runner selects the implementation from the
//! variant's kind at runtime.

mod agent;
mod parse;
mod simple;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{FailureKind, Gateway, Usage, DEFAULT_MAX_OUTPUT_TOKENS, NOCOT_MAX_OUTPUT_TOKENS};
use crate::sandbox::ToolResult;
use crate::task::{Sample, Task};

pub use agent::{frame_tool_output, AgentApproach, AgentProtocol, BASH_CLOSE, BASH_OPEN, TOOL_OUTPUT_LABEL};
pub use parse::{extract_answer, parse_stop_sequence_call};
pub use simple::SimpleApproach;

/// Line prefix that declares the final answer.
pub const ANSWER_PREFIX: &str = "ANSWER:";
pub const DEFAULT_STEP_LIMIT: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ApproachKind {
    #[serde(rename = "simple-cot")]
    SimpleCot,
    #[serde(rename = "simple-nocot")]
    SimpleNoCot,
    #[serde(rename = "simple-memorization")]
    SimpleMemorization,
    #[serde(rename = "agent-stopseq")]
    AgentStopSeq,
    #[serde(rename = "agent-native")]
    AgentNative,
}

impl ApproachKind {
    pub const ALL: [ApproachKind; 5] = [
        ApproachKind::SimpleCot,
        ApproachKind::SimpleNoCot,
        ApproachKind::SimpleMemorization,
        ApproachKind::AgentStopSeq,
        ApproachKind::AgentNative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ApproachKind::SimpleCot => "simple-cot",
            ApproachKind::SimpleNoCot => "simple-nocot",
            ApproachKind::SimpleMemorization => "simple-memorization",
            ApproachKind::AgentStopSeq => "agent-stopseq",
            ApproachKind::AgentNative => "agent-native",
        }
    }

    pub fn family(self) -> ApproachFamily {
        match self {
            ApproachKind::SimpleCot | ApproachKind::SimpleNoCot => ApproachFamily::Simple,
            ApproachKind::SimpleMemorization => ApproachFamily::Memorization,
            ApproachKind::AgentStopSeq | ApproachKind::AgentNative => ApproachFamily::Agent,
        }
    }

    pub fn is_agent(self) -> bool {
        self.family() == ApproachFamily::Agent
    }
}

impl fmt::Display for ApproachKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ApproachKind {
    type Err = ApproachError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ApproachError::UnknownKind(s.to_string()))
    }
}

/// What context an approach receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproachFamily {
    Simple,
    Agent,
    Memorization,
}

/// An approach kind bound to a model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ApproachVariant {
    pub kind: ApproachKind,
    pub model_id: String,
    pub step_limit: u32,
}

impl ApproachVariant {
    pub fn new(kind: ApproachKind, model_id: impl Into<String>) -> Self {
        Self {
            kind,
            model_id: model_id.into(),
            step_limit: DEFAULT_STEP_LIMIT,
        }
    }

    pub fn with_step_limit(mut self, step_limit: u32) -> Self {
        self.step_limit = step_limit;
        self
    }

    /// `kind@model`, the variant's identity in stores and reports.
    pub fn name(&self) -> String {
        format!("{}@{}", self.kind, self.model_id)
    }

    pub fn parse(name: &str) -> Result<Self, ApproachError> {
        let (kind, model) = name
            .split_once('@')
            .ok_or_else(|| ApproachError::UnknownKind(name.to_string()))?;
        if model.is_empty() {
            return Err(ApproachError::UnknownKind(name.to_string()));
        }
        Ok(Self::new(kind.parse()?, model))
    }

    pub fn max_output_tokens(&self) -> u32 {
        match self.kind {
            ApproachKind::SimpleNoCot => NOCOT_MAX_OUTPUT_TOKENS,
            _ => DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    /// The eight configurations of the study, in report order.
    pub fn default_set() -> Vec<ApproachVariant> {
        const SONNET: &str = "claude-3.7-sonnet";
        const LLAMA: &str = "llama-3.3-70b";
        const MISTRAL: &str = "mistral-large-3";
        vec![
            Self::new(ApproachKind::SimpleCot, SONNET),
            Self::new(ApproachKind::SimpleCot, LLAMA),
            Self::new(ApproachKind::SimpleCot, MISTRAL),
            Self::new(ApproachKind::SimpleNoCot, SONNET),
            Self::new(ApproachKind::SimpleMemorization, SONNET),
            Self::new(ApproachKind::AgentStopSeq, SONNET),
            Self::new(ApproachKind::AgentNative, SONNET),
            Self::new(ApproachKind::AgentNative, MISTRAL),
        ]
    }
}

impl fmt::Display for ApproachVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind, self.model_id)
    }
}

/// Result of one experiment. Exactly one of `predicted` and `failure` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub predicted: Option<String>,
    pub failure: Option<FailureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_detail: Option<String>,
    pub steps_used: u32,
    pub command_count: u32,
    /// Executed commands that exited nonzero or timed out.
    #[serde(default)]
    pub tool_errors: u32,
    pub usage_total: Usage,
    pub wall_time_ms: u64,
}

impl Outcome {
    pub fn is_failure(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Prompt,
    Generation,
    ToolCall,
    ToolOutput,
    FinalAnswer,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub index: u32,
    pub kind: EventKind,
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
}

/// Ordered record of one experiment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub events: Vec<TrajectoryEvent>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("trajectory event {index}: {message}")]
pub struct TrajectoryError {
    pub index: usize,
    pub message: String,
}

impl Trajectory {
    pub fn push(&mut self, kind: EventKind, payload: impl Into<String>) -> &mut TrajectoryEvent {
        let index = self.events.len() as u32;
        self.events.push(TrajectoryEvent {
            index,
            kind,
            payload: payload.into(),
            usage: None,
            exit_code: None,
        });
        self.events.last_mut().unwrap()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TrajectoryEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Commands in execution order.
    pub fn commands(&self) -> impl Iterator<Item = &str> {
        self.of_kind(EventKind::ToolCall).map(|e| e.payload.as_str())
    }

    /// Check the ordering rules: dense indices starting with a prompt, every
    /// tool call directly followed by its output, and at most one terminal
    /// event, placed last.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let err = |index: usize, message: &str| TrajectoryError {
            index,
            message: message.into(),
        };
        if self.events.first().map(|e| e.kind) != Some(EventKind::Prompt) {
            return Err(err(0, "first event must be the prompt"));
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.index as usize != i {
                return Err(err(i, "indices must be dense and ordered"));
            }
            let next = self.events.get(i + 1).map(|n| n.kind);
            match e.kind {
                EventKind::ToolCall if next != Some(EventKind::ToolOutput) => {
                    return Err(err(i, "tool call without immediate output"));
                }
                EventKind::ToolOutput if i == 0 || self.events[i - 1].kind != EventKind::ToolCall => {
                    return Err(err(i, "tool output without a preceding call"));
                }
                EventKind::FinalAnswer | EventKind::Failure if next.is_some() => {
                    return Err(err(i, "terminal event must be last"));
                }
                EventKind::Prompt if i != 0 => return Err(err(i, "prompt must come first")),
                _ => {}
            }
        }
        Ok(())
    }
}

/// Runs shell commands for an agent. Infrastructure faults are reported as
/// errors and shown to the agent like any other failed command.
pub trait ShellExecutor {
    fn execute(&mut self, command: &str) -> Result<ToolResult, String>;
}

/// Everything one experiment needs besides the variant.
pub struct RunContext<'a> {
    pub task: &'a Task,
    pub sample: &'a Sample,
    pub gateway: &'a Gateway,
    /// Required by agent approaches.
    pub shell: Option<&'a mut dyn ShellExecutor>,
    pub seed: u64,
    /// Cache-marker grid in estimated tokens; `None` disables markers.
    pub cache_grid: Option<u64>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ApproachError {
    #[error("unknown approach '{0}'")]
    UnknownKind(String),
    #[error("approach '{approach}' cannot run variant '{variant}'")]
    KindMismatch { approach: String, variant: String },
    #[error("agent approach '{0}' needs a workspace")]
    MissingWorkspace(String),
}

/// One approach kind. Failures of the experiment itself (overflow, invalid
/// answer, step limit, provider faults) are part of the [`Outcome`]; `Err` is
/// reserved for misuse.
pub trait Approach: Send + Sync {
    fn kind(&self) -> ApproachKind;

    fn run(&self, variant: &ApproachVariant, ctx: RunContext<'_>) -> Result<(Outcome, Trajectory), ApproachError>;
}

/// Approach implementations keyed by kind name.
#[derive(Clone, Default)]
pub struct ApproachRegistry {
    entries: BTreeMap<String, Arc<dyn Approach>>,
}

impl ApproachRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// All five built-in kinds.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        for kind in [ApproachKind::SimpleCot, ApproachKind::SimpleNoCot, ApproachKind::SimpleMemorization] {
            r.register(Arc::new(SimpleApproach::new(kind)));
        }
        r.register(Arc::new(AgentApproach::new(AgentProtocol::StopSequence)));
        r.register(Arc::new(AgentApproach::new(AgentProtocol::Native)));
        r
    }

    pub fn register(&mut self, approach: Arc<dyn Approach>) {
        self.entries.insert(approach.kind().as_str().to_string(), approach);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Approach>, ApproachError> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| ApproachError::UnknownKind(name.to_string()))
    }

    pub fn for_variant(&self, variant: &ApproachVariant) -> Result<Arc<dyn Approach>, ApproachError> {
        self.get(variant.kind.as_str())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

pub(crate) fn check_kind(approach: &dyn Approach, variant: &ApproachVariant) -> Result<(), ApproachError> {
    if approach.kind() != variant.kind {
        return Err(ApproachError::KindMismatch {
            approach: approach.kind().to_string(),
            variant: variant.name(),
        });
    }
    Ok(())
}

pub fn failure_outcome(kind: FailureKind, detail: impl Into<String>) -> Outcome {
    Outcome {
        predicted: None,
        failure: Some(kind),
        failure_detail: Some(detail.into()),
        ..answered_outcome(String::new())
    }
}

pub fn answered_outcome(label: String) -> Outcome {
    Outcome {
        predicted: Some(label),
        failure: None,
        failure_detail: None,
        steps_used: 0,
        command_count: 0,
        tool_errors: 0,
        usage_total: Usage::default(),
        wall_time_ms: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in ApproachVariant::default_set() {
            assert_eq!(ApproachVariant::parse(&v.name()).unwrap(), v);
        }
        assert!(ApproachVariant::parse("simple-cot").is_err());
        assert!(ApproachVariant::parse("telepathy@m").is_err());
    }

    #[test]
    fn default_set_has_eight_distinct_variants() {
        let set = ApproachVariant::default_set();
        let names: std::collections::BTreeSet<_> = set.iter().map(ApproachVariant::name).collect();
        assert_eq!(names.len(), 8);
    }

    #[test]
    fn registry_resolves_every_kind() {
        let r = ApproachRegistry::builtin();
        for k in ApproachKind::ALL {
            assert_eq!(r.get(k.as_str()).unwrap().kind(), k);
        }
        assert!(r.get("oracle").is_err());
    }

    #[test]
    fn validate_rejects_dangling_tool_call() {
        let mut t = Trajectory::default();
        t.push(EventKind::Prompt, "p");
        t.push(EventKind::ToolCall, "ls");
        assert!(t.validate().is_err());
        t.push(EventKind::ToolOutput, "a");
        t.push(EventKind::FinalAnswer, "x");
        assert!(t.validate().is_ok());
        t.push(EventKind::Failure, "y");
        assert!(t.validate().is_err());
    }
}
