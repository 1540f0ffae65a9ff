use std::time::Instant;

use super::{
    answered_outcome, check_kind, extract_answer, failure_outcome, parse_stop_sequence_call,
    Approach, ApproachError, ApproachKind, ApproachVariant, EventKind, Outcome, RunContext,
    Trajectory,
};
use crate::accounting::mark_cache_points;
use crate::approach::ApproachFamily;
use crate::gateway::{FailureKind, GenerationParams, Message, ToolSchema, Usage};
use crate::sandbox::ToolResult;
use crate::shell::count_commands;
use crate::task::{assemble_context, build_prompt};

pub const BASH_OPEN: &str = "<bash>";
pub const BASH_CLOSE: &str = "</bash>";
/// Heads every tool output shown to the model.
pub const TOOL_OUTPUT_LABEL: &str = "[run-bash output]";

/// How the agent expresses tool calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentProtocol {
    /// `<bash>…</bash>` in text, with the closing tag as stop sequence.
    StopSequence,
    /// Structured calls through the backend's tool interface.
    Native,
}

/// The generate, execute, observe loop.
pub struct AgentApproach {
    protocol: AgentProtocol,
}

impl AgentApproach {
    pub fn new(protocol: AgentProtocol) -> Self {
        Self { protocol }
    }
}

/// The text the model sees for one command result.
pub fn frame_tool_output(result: &ToolResult) -> String {
    let mut out = format!("{TOOL_OUTPUT_LABEL} exit code {}", result.exit_code);
    if result.timed_out {
        out.push_str(" (timed out)");
    }
    out.push('\n');
    for (name, text) in [("stdout", &result.stdout), ("stderr", &result.stderr)] {
        if text.is_empty() {
            continue;
        }
        out.push_str(name);
        out.push_str(":\n");
        out.push_str(text);
        if !text.ends_with('\n') {
            out.push('\n');
        }
    }
    if result.stdout.is_empty() && result.stderr.is_empty() {
        out.push_str("(no output)\n");
    }
    out
}

impl Approach for AgentApproach {
    fn kind(&self) -> ApproachKind {
        match self.protocol {
            AgentProtocol::StopSequence => ApproachKind::AgentStopSeq,
            AgentProtocol::Native => ApproachKind::AgentNative,
        }
    }

    fn run(&self, variant: &ApproachVariant, ctx: RunContext<'_>) -> Result<(Outcome, Trajectory), ApproachError> {
        check_kind(self, variant)?;
        let shell = ctx
            .shell
            .ok_or_else(|| ApproachError::MissingWorkspace(variant.name()))?;
        let started = Instant::now();
        let bundle = assemble_context(ctx.task, ctx.sample, ApproachFamily::Agent);
        let prompt = build_prompt(ctx.task, &bundle, variant);
        let mut trajectory = Trajectory::default();
        trajectory.push(EventKind::Prompt, prompt.render());

        let mut messages = prompt.to_messages();
        let params = GenerationParams {
            max_output_tokens: variant.max_output_tokens(),
            stop_sequences: match self.protocol {
                AgentProtocol::StopSequence => vec![BASH_CLOSE.to_string()],
                AgentProtocol::Native => Vec::new(),
            },
            seed: Some(ctx.seed),
            ..GenerationParams::default()
        };
        let schema = ToolSchema::run_bash();

        let mut usage = Usage::default();
        let mut steps = 0u32;
        let mut commands = 0u32;
        let mut tool_errors = 0u32;
        let end: Result<String, (FailureKind, String)> = loop {
            if steps >= variant.step_limit {
                break Err((
                    FailureKind::StepLimit,
                    format!("no answer after {} commands", variant.step_limit),
                ));
            }
            let request = match ctx.cache_grid {
                Some(grid) => mark_cache_points(&messages, grid),
                None => messages.clone(),
            };
            let generated = match self.protocol {
                AgentProtocol::Native => ctx.gateway.generate_with_tools(&request, &schema, &params),
                AgentProtocol::StopSequence => ctx.gateway.generate(&request, &params),
            };
            let turn = match generated {
                Ok(t) => t,
                Err(e) => break Err((e.failure_kind(), e.to_string())),
            };
            usage += turn.usage;
            if turn.dropped_tool_calls > 0 {
                log::warn!(
                    "{}: backend returned {} extra tool calls in one turn; only the first runs",
                    variant.name(),
                    turn.dropped_tool_calls
                );
            }

            let mut said = turn.text.clone();
            let command = match self.protocol {
                AgentProtocol::StopSequence => {
                    if let Some(stop) = &turn.matched_stop {
                        said.push_str(stop);
                    }
                    parse_stop_sequence_call(&said).map(str::to_string)
                }
                AgentProtocol::Native => turn.native_tool_call.as_ref().map(|c| c.command.clone()),
            };
            trajectory.push(EventKind::Generation, said.clone()).usage = Some(turn.usage);

            let Some(command) = command else {
                break extract_answer(&turn.text, ctx.task, variant)
                    .ok_or((FailureKind::InvalidCategory, "no allowed answer in final reply".into()));
            };

            trajectory.push(EventKind::ToolCall, command.clone());
            let (framed, exit_code) = match shell.execute(&command) {
                Ok(r) => {
                    if r.exit_code != 0 || r.timed_out {
                        tool_errors += 1;
                    }
                    (frame_tool_output(&r), r.exit_code)
                }
                Err(e) => {
                    tool_errors += 1;
                    (format!("{TOOL_OUTPUT_LABEL} sandbox error: {e}\n"), -1)
                }
            };
            trajectory.push(EventKind::ToolOutput, framed.clone()).exit_code = Some(exit_code);
            steps += 1;
            commands += count_commands(&command);

            match turn.native_tool_call {
                Some(call) => {
                    let id = call.id.clone();
                    messages.push(Message::assistant_tool_call(turn.text, call));
                    messages.push(Message::tool_result(id, framed));
                }
                None => {
                    messages.push(Message::assistant(said));
                    messages.push(Message::user(framed));
                }
            }
        };

        let mut outcome = match end {
            Ok(label) => {
                trajectory.push(EventKind::FinalAnswer, label.clone());
                answered_outcome(label)
            }
            Err((kind, detail)) => {
                trajectory.push(EventKind::Failure, format!("{kind}: {detail}"));
                failure_outcome(kind, detail)
            }
        };
        outcome.steps_used = steps;
        outcome.command_count = commands;
        outcome.tool_errors = tool_errors;
        outcome.usage_total = usage;
        outcome.wall_time_ms = started.elapsed().as_millis() as u64;
        Ok((outcome, trajectory))
    }
}
