use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::context::{BundleKind, ContextBundle};
use super::Task;
use crate::approach::{ApproachKind, ApproachVariant, ANSWER_PREFIX};
use crate::gateway::Message;

/// Variant-specific closing instruction of a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptStyle {
    ReasoningTrace,
    DirectAnswer,
    Memorization,
    StopSequenceTools { step_limit: u32 },
    NativeTools { step_limit: u32 },
}

impl PromptStyle {
    pub fn for_variant(variant: &ApproachVariant) -> Self {
        match variant.kind {
            ApproachKind::SimpleCot => PromptStyle::ReasoningTrace,
            ApproachKind::SimpleNoCot => PromptStyle::DirectAnswer,
            ApproachKind::SimpleMemorization => PromptStyle::Memorization,
            ApproachKind::AgentStopSeq => PromptStyle::StopSequenceTools {
                step_limit: variant.step_limit,
            },
            ApproachKind::AgentNative => PromptStyle::NativeTools {
                step_limit: variant.step_limit,
            },
        }
    }

    fn instruction(self) -> String {
        let answer = format!("`{ANSWER_PREFIX} <category>`");
        match self {
            PromptStyle::ReasoningTrace => format!(
                "Reason step by step about the evidence above. After your reasoning, \
                 finish with a final line of the form {answer}."
            ),
            PromptStyle::DirectAnswer => format!(
                "Do not explain and do not reason. Reply with the single line {answer} \
                 and nothing else."
            ),
            PromptStyle::Memorization => format!(
                "You only receive the identifier of the artifact. Answer from what you \
                 already know about it. Finish with a final line of the form {answer}."
            ),
            PromptStyle::StopSequenceTools { step_limit } => format!(
                "You have shell access to the repository. To run a command, write it \
                 between <bash> and </bash>. Generation stops at the closing tag and the \
                 command output is returned in the next message. Run one command per \
                 message; pipes and chaining are allowed. You may run at most {step_limit} \
                 commands. There is no internet access. Once you have enough evidence, \
                 reply without a <bash> block and finish with a final line of the form {answer}."
            ),
            PromptStyle::NativeTools { step_limit } => format!(
                "You have shell access to the repository through the run-bash tool. Call \
                 it at most once per turn; pipes and chaining are allowed within one call. \
                 You may run at most {step_limit} commands. There is no internet access. \
                 Once you have enough evidence, reply with text only and finish with a \
                 final line of the form {answer}."
            ),
        }
    }
}

/// A rendered prompt: task framing in the system part, context in the user part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn render(&self) -> String {
        format!("[system]\n{}\n[user]\n{}", self.system, self.user)
    }

    pub fn to_messages(&self) -> Vec<Message> {
        vec![Message::system(&self.system), Message::user(&self.user)]
    }
}

/// Build the prompt for `variant` from the task framing and an assembled bundle.
///
/// Pure: identical inputs always give identical bytes.
pub fn build_prompt(task: &Task, bundle: &ContextBundle, variant: &ApproachVariant) -> Prompt {
    debug_assert_eq!(
        bundle.kind,
        match variant.kind.family() {
            crate::approach::ApproachFamily::Simple => BundleKind::Engineered,
            crate::approach::ApproachFamily::Memorization => BundleKind::MinimalId,
            crate::approach::ApproachFamily::Agent => BundleKind::AgentManifest,
        }
    );
    let style = PromptStyle::for_variant(variant);
    let with_unclear = variant.kind != ApproachKind::SimpleMemorization;
    let answers = task.answer_set(with_unclear);

    let mut system = String::new();
    system.push_str("You label software repository artifacts for an empirical study.\n");
    if !task.guidelines.trim().is_empty() {
        let _ = write!(system, "\n## Labeling guidelines\n{}\n", task.guidelines.trim_end());
    }
    let _ = write!(system, "\n## Question\n{}\n", task.question.trim());
    system.push_str("\n## Categories\nAnswer with exactly one of:\n");
    for a in &answers {
        let _ = writeln!(system, "- {a}");
    }
    if answers.contains(&super::UNCLEAR) {
        system.push_str(
            "Answer \"unclear\" when the available information does not support a single category.\n",
        );
    }
    let _ = write!(system, "\n## Instructions\n{}\n", style.instruction());

    let mut user = String::new();
    for (i, part) in bundle.parts.iter().enumerate() {
        if i > 0 {
            user.push('\n');
        }
        let _ = write!(user, "## {}\n{}\n", part.label, part.text.trim_end());
    }

    Prompt { system, user }
}
