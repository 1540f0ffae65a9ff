//! Uniform access to text-generation backends.
//!
//! A [`Backend`] produces one [`Turn`] per call. [`Gateway`] wraps a backend
//! with request validation and the retry policy for transient provider faults.
//! Backends are created per experiment through a [`BackendRegistry`], keyed by
//! name (`mock`, `http`, or anything registered by the embedding program).

mod errors;
mod http;
mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use errors::{map_provider_error, RawProviderError};
pub use http::{HttpBackend, HttpConfig, ENDPOINT_ENV, API_KEY_ENV};
pub use mock::{MockBackend, MockLibrary, MockScript, ScriptError, ScriptTurn};

/// Name of the single tool agents may call.
pub const RUN_BASH: &str = "run-bash";

/// Default per-turn output budget.
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;
/// Output budget for the direct-answer variant.
pub const NOCOT_MAX_OUTPUT_TOKENS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// A structured tool invocation returned by a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NativeToolCall {
    pub id: String,
    pub name: String,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<NativeToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    /// Cache everything up to and including this message.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cache_marker: bool,
}

impl Message {
    fn with_role(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_call: None,
            tool_call_id: None,
            cache_marker: false,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::with_role(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::with_role(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::with_role(Role::Assistant, content)
    }

    pub fn assistant_tool_call(content: impl Into<String>, call: NativeToolCall) -> Self {
        Self {
            tool_call: Some(call),
            ..Self::with_role(Role::Assistant, content)
        }
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            tool_call_id: Some(call_id.into()),
            ..Self::with_role(Role::Tool, content)
        }
    }

    /// Estimated token size, including a structured tool call if present.
    pub fn estimated_tokens(&self) -> u64 {
        let call = self
            .tool_call
            .as_ref()
            .map(|c| crate::estimate_tokens(&c.command))
            .unwrap_or(0);
        crate::estimate_tokens(&self.content) + call
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    /// Forwarded to backends that support seeded sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            stop_sequences: Vec::new(),
            seed: None,
        }
    }
}

/// Token usage of one or more turns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    #[serde(default)]
    pub cache_read_tokens: u64,
    #[serde(default)]
    pub cache_write_tokens: u64,
}

impl Usage {
    pub fn has_cache_tokens(&self) -> bool {
        self.cache_read_tokens > 0 || self.cache_write_tokens > 0
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens + self.cache_read_tokens + self.cache_write_tokens
    }
}

impl Add for Usage {
    type Output = Usage;

    fn add(self, rhs: Usage) -> Usage {
        Usage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
            cache_read_tokens: self.cache_read_tokens + rhs.cache_read_tokens,
            cache_write_tokens: self.cache_write_tokens + rhs.cache_write_tokens,
        }
    }
}

impl AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        *self = *self + rhs;
    }
}

impl Sum for Usage {
    fn sum<I: Iterator<Item = Usage>>(iter: I) -> Usage {
        iter.fold(Usage::default(), Add::add)
    }
}

impl<'a> Sum<&'a Usage> for Usage {
    fn sum<I: Iterator<Item = &'a Usage>>(iter: I) -> Usage {
        iter.copied().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StopSequence,
    End,
    ToolCall,
    Length,
}

/// One generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    /// Generated text, excluding any matched stop sequence.
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_tool_call: Option<NativeToolCall>,
    pub usage: Usage,
    pub stop_reason: StopReason,
    /// The stop sequence that ended generation, when `stop_reason` is `stop_sequence`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_stop: Option<String>,
    /// Extra tool calls the backend produced in the same turn and that were dropped.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub dropped_tool_calls: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

/// Why an experiment failed. Every kind invalidates the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    ContextOverflow,
    InvalidCategory,
    StepLimit,
    ProviderError,
}

impl FailureKind {
    pub const ALL: [FailureKind; 4] = [
        FailureKind::ContextOverflow,
        FailureKind::InvalidCategory,
        FailureKind::StepLimit,
        FailureKind::ProviderError,
    ];

    pub fn is_fatal(self) -> bool {
        true
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::ContextOverflow => "context_overflow",
            FailureKind::InvalidCategory => "invalid_category",
            FailureKind::StepLimit => "step_limit",
            FailureKind::ProviderError => "provider_error",
        }
    }
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("context window exceeded: {0}")]
    ContextOverflow(String),
    #[error("provider error: {message}")]
    Provider { message: String, retryable: bool },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    pub fn failure_kind(&self) -> FailureKind {
        match self {
            GatewayError::ContextOverflow(_) => FailureKind::ContextOverflow,
            GatewayError::Provider { .. } | GatewayError::InvalidRequest(_) => {
                FailureKind::ProviderError
            }
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Provider { retryable: true, .. })
    }

    /// Build an error from a raw provider failure via [`map_provider_error`].
    pub fn from_raw(raw: &RawProviderError) -> Self {
        match map_provider_error(raw) {
            FailureKind::ContextOverflow => GatewayError::ContextOverflow(raw.summary()),
            _ => GatewayError::Provider {
                message: raw.summary(),
                retryable: raw.is_retryable(),
            },
        }
    }
}

/// The one tool agents get: `run-bash(command)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameter: String,
}

impl ToolSchema {
    pub fn run_bash() -> Self {
        Self {
            name: RUN_BASH.into(),
            description: "Run a bash command in the repository working directory and return its output."
                .into(),
            parameter: "command".into(),
        }
    }
}

/// A text-generation backend.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Produce one turn. `tools` is `Some` only for native tool calling.
    fn generate(
        &self,
        messages: &[Message],
        tools: Option<&ToolSchema>,
        params: &GenerationParams,
    ) -> Result<Turn, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            initial_backoff: Duration::ZERO,
        }
    }
}

/// Validated, retrying access to one backend.
pub struct Gateway {
    backend: Box<dyn Backend>,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Self::with_retry(backend, RetryPolicy::default())
    }

    pub fn with_retry(backend: Box<dyn Backend>, retry: RetryPolicy) -> Self {
        Self { backend, retry }
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn generate(&self, messages: &[Message], params: &GenerationParams) -> Result<Turn, GatewayError> {
        self.call(messages, None, params)
    }

    pub fn generate_with_tools(
        &self,
        messages: &[Message],
        tools: &ToolSchema,
        params: &GenerationParams,
    ) -> Result<Turn, GatewayError> {
        if tools.name != RUN_BASH {
            return Err(GatewayError::InvalidRequest(format!(
                "only the {RUN_BASH} tool is supported, got '{}'",
                tools.name
            )));
        }
        self.call(messages, Some(tools), params)
    }

    fn call(
        &self,
        messages: &[Message],
        tools: Option<&ToolSchema>,
        params: &GenerationParams,
    ) -> Result<Turn, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if params.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be at least 1".into()));
        }
        let attempts = self.retry.attempts.max(1);
        let mut backoff = self.retry.initial_backoff;
        let mut attempt = 1;
        loop {
            match self.backend.generate(messages, tools, params) {
                Ok(turn) => return check_turn(turn, tools.is_some()),
                Err(e) if e.is_retryable() && attempt < attempts => {
                    log::warn!(
                        "{}: attempt {attempt}/{attempts} failed: {e}; retrying",
                        self.backend.name()
                    );
                    thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn check_turn(turn: Turn, tools_enabled: bool) -> Result<Turn, GatewayError> {
    match (&turn.native_tool_call, turn.stop_reason) {
        (Some(call), StopReason::ToolCall) => {
            if !tools_enabled {
                return Err(GatewayError::Provider {
                    message: "backend returned a tool call without a tool schema".into(),
                    retryable: false,
                });
            }
            if call.command.trim().is_empty() {
                return Err(GatewayError::Provider {
                    message: "tool call without a command".into(),
                    retryable: false,
                });
            }
            Ok(turn)
        }
        (None, StopReason::ToolCall) | (Some(_), _) => Err(GatewayError::Provider {
            message: "tool call and stop reason disagree".into(),
            retryable: false,
        }),
        (None, _) => Ok(turn),
    }
}

/// What a backend factory knows about the experiment it serves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendContext {
    pub model_id: String,
    pub variant: String,
    pub task_id: String,
    pub sample_id: String,
}

pub type BackendFactory =
    Box<dyn Fn(&BackendContext) -> Result<Box<dyn Backend>, GatewayError> + Send + Sync>;

/// Backend constructors registered by name.
#[derive(Default)]
pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, name: impl Into<String>, factory: F)
    where
        F: Fn(&BackendContext) -> Result<Box<dyn Backend>, GatewayError> + Send + Sync + 'static,
    {
        self.factories.insert(name.into(), Box::new(factory));
    }

    /// `mock` (scripts under `mock_root`) and `http` (endpoint from the
    /// environment).
    pub fn builtin(mock_root: impl Into<std::path::PathBuf>) -> Self {
        let mut r = Self::new();
        let library = MockLibrary::new(mock_root);
        r.register("mock", move |ctx| Ok(Box::new(library.backend(ctx)?) as Box<dyn Backend>));
        r.register("http", |ctx| {
            Ok(Box::new(HttpBackend::new(HttpConfig::from_env()?, ctx.model_id.clone())?) as Box<dyn Backend>)
        });
        r
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, ctx: &BackendContext) -> Result<Box<dyn Backend>, GatewayError> {
        let factory = self.factories.get(name).ok_or_else(|| {
            GatewayError::InvalidRequest(format!(
                "unknown backend '{name}' (registered: {})",
                self.factories.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(ctx)
    }
}
