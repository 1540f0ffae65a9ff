use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Backend, BackendContext, GatewayError, GenerationParams, Message, NativeToolCall, Role,
    StopReason, ToolSchema, Turn, Usage, RUN_BASH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptError {
    ContextOverflow,
    /// Transient provider fault; retried by the gateway and fails every attempt.
    Provider,
}

/// One scripted reply. The reply for a call is chosen by the number of
/// assistant messages already in the conversation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTurn {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Alternatives picked deterministically from the request seed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub one_of: Vec<String>,
    /// Commands returned as native calls when the request carries a tool schema.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<String>,
    /// Overrides the estimated usage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ScriptError>,
}

impl ScriptTurn {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Self::default()
        }
    }

    pub fn call(command: impl Into<String>) -> Self {
        Self {
            tool_calls: vec![command.into()],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    /// Estimated input tokens above which a call overflows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_window: Option<u64>,
    /// Honor cache markers in reported usage.
    #[serde(default)]
    pub caching: bool,
    /// Keep replaying the last turn once the script runs out.
    #[serde(default)]
    pub repeat_last: bool,
    pub turns: Vec<ScriptTurn>,
}

impl MockScript {
    pub fn new(turns: Vec<ScriptTurn>) -> Self {
        Self {
            turns,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| {
            GatewayError::InvalidRequest(format!("mock script {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            GatewayError::InvalidRequest(format!("mock script {}: {e}", path.display()))
        })
    }
}

/// Deterministic scripted backend. Stateless: the reply depends only on the
/// script, the messages and the request seed.
#[derive(Debug, Clone)]
pub struct MockBackend {
    script: Arc<MockScript>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script: Arc::new(script),
        }
    }

    fn pick_text(turn: &ScriptTurn, seed: u64, index: usize) -> String {
        if let Some(t) = &turn.text {
            return t.clone();
        }
        if turn.one_of.is_empty() {
            return String::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        turn.one_of[rng.random_range(0..turn.one_of.len())].clone()
    }

    fn usage(&self, messages: &[Message], output: u64) -> Usage {
        let sizes: Vec<u64> = messages.iter().map(Message::estimated_tokens).collect();
        let total: u64 = sizes.iter().sum();
        if !self.script.caching {
            return Usage {
                input_tokens: total,
                output_tokens: output,
                ..Usage::default()
            };
        }
        let prefix = |i: usize| sizes[..=i].iter().sum::<u64>();
        // markers before the last assistant message were written by an earlier call
        let last_assistant = messages.iter().rposition(|m| m.role == Role::Assistant);
        let markers: Vec<usize> = (0..messages.len()).filter(|&i| messages[i].cache_marker).collect();
        let read_end = markers
            .iter()
            .copied()
            .filter(|&i| last_assistant.is_some_and(|a| i < a))
            .max();
        let write_end = markers.iter().copied().filter(|&i| Some(i) > read_end).max();
        let read = read_end.map(prefix).unwrap_or(0);
        let write = write_end.map(prefix).unwrap_or(read) - read;
        Usage {
            input_tokens: total - read - write,
            output_tokens: output,
            cache_read_tokens: read,
            cache_write_tokens: write,
        }
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn generate(
        &self,
        messages: &[Message],
        tools: Option<&ToolSchema>,
        params: &GenerationParams,
    ) -> Result<Turn, GatewayError> {
        let input: u64 = messages.iter().map(Message::estimated_tokens).sum();
        if let Some(window) = self.script.context_window {
            if input > window {
                return Err(GatewayError::ContextOverflow(format!(
                    "{input} estimated input tokens exceed the {window}-token window"
                )));
            }
        }

        let index = messages.iter().filter(|m| m.role == Role::Assistant).count();
        let turn = match self.script.turns.get(index) {
            Some(t) => t,
            None if self.script.repeat_last && !self.script.turns.is_empty() => {
                self.script.turns.last().unwrap()
            }
            None => {
                return Err(GatewayError::Provider {
                    message: format!("mock script exhausted at turn {index}"),
                    retryable: false,
                })
            }
        };
        match turn.error {
            Some(ScriptError::ContextOverflow) => {
                return Err(GatewayError::ContextOverflow("scripted overflow".into()))
            }
            Some(ScriptError::Provider) => {
                return Err(GatewayError::Provider {
                    message: "scripted provider fault".into(),
                    retryable: true,
                })
            }
            None => {}
        }

        let mut text = Self::pick_text(turn, params.seed.unwrap_or(0), index);
        let limit = params.max_output_tokens as usize * 4;

        if tools.is_some() && !turn.tool_calls.is_empty() {
            let call = NativeToolCall {
                id: format!("call_{index}"),
                name: RUN_BASH.into(),
                command: turn.tool_calls[0].clone(),
            };
            let output = crate::estimate_tokens(&text) + crate::estimate_tokens(&call.command);
            return Ok(Turn {
                usage: turn.usage.unwrap_or_else(|| self.usage(messages, output)),
                text,
                native_tool_call: Some(call),
                stop_reason: StopReason::ToolCall,
                matched_stop: None,
                dropped_tool_calls: turn.tool_calls.len() as u32 - 1,
            });
        }

        let earliest = params
            .stop_sequences
            .iter()
            .filter(|s| !s.is_empty())
            .filter_map(|s| text.find(s.as_str()).map(|p| (p, s)))
            .min_by_key(|(p, _)| *p);
        let (stop_reason, matched_stop) = match earliest {
            Some((pos, stop)) if text[..pos].chars().count() <= limit => {
                text.truncate(pos);
                (StopReason::StopSequence, Some(stop.clone()))
            }
            _ if text.chars().count() > limit => {
                text = text.chars().take(limit).collect();
                (StopReason::Length, None)
            }
            _ => (StopReason::End, None),
        };
        let output = crate::estimate_tokens(&text);
        Ok(Turn {
            usage: turn.usage.unwrap_or_else(|| self.usage(messages, output)),
            text,
            native_tool_call: None,
            stop_reason,
            matched_stop,
            dropped_tool_calls: 0,
        })
    }
}

/// A directory of mock scripts. For an experiment the first existing file wins:
/// `<task>/<variant>/<sample>.json`, `<task>/<variant>.json`, `<variant>.json`,
/// `default.json`.
#[derive(Debug, Clone)]
pub struct MockLibrary {
    root: PathBuf,
}

impl MockLibrary {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, ctx: &BackendContext) -> Option<PathBuf> {
        let candidates = [
            self.root
                .join(&ctx.task_id)
                .join(&ctx.variant)
                .join(format!("{}.json", ctx.sample_id)),
            self.root.join(&ctx.task_id).join(format!("{}.json", ctx.variant)),
            self.root.join(format!("{}.json", ctx.variant)),
            self.root.join("default.json"),
        ];
        candidates.into_iter().find(|p| p.is_file())
    }

    pub fn backend(&self, ctx: &BackendContext) -> Result<MockBackend, GatewayError> {
        let path = self.resolve(ctx).ok_or_else(|| {
            GatewayError::InvalidRequest(format!(
                "no mock script for {}/{}/{} under {}",
                ctx.task_id,
                ctx.variant,
                ctx.sample_id,
                self.root.display()
            ))
        })?;
        Ok(MockBackend::new(MockScript::load(&path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Gateway;

    fn gw(script: MockScript) -> Gateway {
        Gateway::with_retry(Box::new(MockBackend::new(script)), super::super::RetryPolicy::immediate(3))
    }

    fn stops(s: &[&str]) -> GenerationParams {
        GenerationParams {
            stop_sequences: s.iter().map(|x| x.to_string()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn stop_sequence_ends_generation() {
        let g = gw(MockScript::new(vec![ScriptTurn::text("<bash>ls</bash> trailing")]));
        let t = g.generate(&[Message::user("go")], &stops(&["</bash>"])).unwrap();
        assert_eq!(t.stop_reason, StopReason::StopSequence);
        assert_eq!(t.text, "<bash>ls");
        assert_eq!(t.matched_stop.as_deref(), Some("</bash>"));
    }

    #[test]
    fn plain_reply_ends_normally() {
        let g = gw(MockScript::new(vec![ScriptTurn::text("done")]));
        let t = g.generate(&[Message::user("go")], &stops(&[])).unwrap();
        assert_eq!(t.stop_reason, StopReason::End);
        assert_eq!(t.usage.output_tokens, 1);
        assert_eq!(t.usage.input_tokens, 1);
    }

    #[test]
    fn oversize_prompt_overflows() {
        let mut script = MockScript::new(vec![ScriptTurn::text("x")]);
        script.context_window = Some(10);
        let g = gw(script);
        let err = g
            .generate(&[Message::user("y".repeat(100))], &GenerationParams::default())
            .unwrap_err();
        assert!(matches!(err, GatewayError::ContextOverflow(_)));
    }

    #[test]
    fn native_call_is_surfaced_and_extras_flagged() {
        let mut turn = ScriptTurn::call("git log -1");
        turn.tool_calls.push("ls".into());
        let g = gw(MockScript::new(vec![turn]));
        let t = g
            .generate_with_tools(&[Message::user("go")], &ToolSchema::run_bash(), &GenerationParams::default())
            .unwrap();
        let call = t.native_tool_call.unwrap();
        assert_eq!((call.name.as_str(), call.command.as_str()), ("run-bash", "git log -1"));
        assert_eq!(t.stop_reason, StopReason::ToolCall);
        assert_eq!(t.dropped_tool_calls, 1);
    }

    #[test]
    fn plain_text_with_tools_is_an_answer() {
        let g = gw(MockScript::new(vec![ScriptTurn::text("corrective")]));
        let t = g
            .generate_with_tools(&[Message::user("go")], &ToolSchema::run_bash(), &GenerationParams::default())
            .unwrap();
        assert!(t.native_tool_call.is_none());
        assert_eq!(t.stop_reason, StopReason::End);
    }

    #[test]
    fn output_is_capped_by_budget() {
        let g = gw(MockScript::new(vec![ScriptTurn::text("a".repeat(200))]));
        let params = GenerationParams {
            max_output_tokens: 16,
            ..Default::default()
        };
        let t = g.generate(&[Message::user("go")], &params).unwrap();
        assert_eq!(t.stop_reason, StopReason::Length);
        assert_eq!(t.text.len(), 64);
    }

    #[test]
    fn turn_index_follows_assistant_messages() {
        let g = gw(MockScript::new(vec![ScriptTurn::text("one"), ScriptTurn::text("two")]));
        let msgs = vec![Message::user("a"), Message::assistant("one"), Message::user("b")];
        assert_eq!(g.generate(&msgs, &GenerationParams::default()).unwrap().text, "two");
        let msgs = [msgs, vec![Message::assistant("two"), Message::user("c")]].concat();
        assert!(g.generate(&msgs, &GenerationParams::default()).is_err());
    }

    #[test]
    fn cache_markers_split_read_and_write() {
        let mut script = MockScript::new(vec![ScriptTurn::text("x"); 3]);
        script.caching = true;
        let g = gw(script);
        let mut sys = Message::system("s".repeat(400));
        sys.cache_marker = true;
        let first = g.generate(&[sys.clone(), Message::user("u".repeat(40))], &GenerationParams::default()).unwrap();
        assert_eq!(first.usage.cache_write_tokens, 100);
        assert_eq!(first.usage.cache_read_tokens, 0);
        assert_eq!(first.usage.input_tokens, 10);

        let mut tail = Message::user("v".repeat(80));
        tail.cache_marker = true;
        let msgs = vec![sys, Message::user("u".repeat(40)), Message::assistant("x"), tail];
        let second = g.generate(&msgs, &GenerationParams::default()).unwrap();
        assert_eq!(second.usage.cache_read_tokens, 100);
        assert_eq!(second.usage.cache_write_tokens, 10 + 1 + 20);
        assert_eq!(second.usage.input_tokens, 0);
    }

    #[test]
    fn without_caching_markers_are_ignored() {
        let g = gw(MockScript::new(vec![ScriptTurn::text("x")]));
        let mut sys = Message::system("s".repeat(400));
        sys.cache_marker = true;
        let t = g.generate(&[sys], &GenerationParams::default()).unwrap();
        assert!(!t.usage.has_cache_tokens());
    }

    #[test]
    fn one_of_is_seeded() {
        let turn = ScriptTurn {
            one_of: (0..20).map(|i| format!("v{i}")).collect(),
            ..Default::default()
        };
        let g = gw(MockScript::new(vec![turn]));
        let with_seed = |s| GenerationParams {
            seed: Some(s),
            ..Default::default()
        };
        let a = g.generate(&[Message::user("x")], &with_seed(7)).unwrap();
        let b = g.generate(&[Message::user("x")], &with_seed(7)).unwrap();
        assert_eq!(a, b);
        let distinct: std::collections::BTreeSet<_> = (0..40)
            .map(|s| g.generate(&[Message::user("x")], &with_seed(s)).unwrap().text)
            .collect();
        assert!(distinct.len() > 1);
    }
}
