use super::{ApproachKind, ApproachVariant, ANSWER_PREFIX};
use crate::task::Task;

use super::agent::{BASH_CLOSE, BASH_OPEN};

/// The verbatim content between the first `<bash>` and the next `</bash>`.
pub fn parse_stop_sequence_call(text: &str) -> Option<&str> {
    let start = text.find(BASH_OPEN)? + BASH_OPEN.len();
    let len = text[start..].find(BASH_CLOSE)?;
    Some(&text[start..start + len])
}

/// The declared answer of `text`, canonicalized to the task's category
/// spelling, or `None` if it is not an allowed label.
///
/// The last `ANSWER:` line wins (case-insensitive). Without one, a reply whose
/// last non-empty line is just a label is accepted.
pub fn extract_answer(text: &str, task: &Task, variant: &ApproachVariant) -> Option<String> {
    let with_unclear = variant.kind != ApproachKind::SimpleMemorization;
    let allowed = task.answer_set(with_unclear);

    let lower = text.to_lowercase();
    let prefix = ANSWER_PREFIX.to_lowercase();
    let candidate = match lower.rfind(&prefix) {
        Some(pos) => {
            let rest = &lower[pos + prefix.len()..];
            rest.lines().next().unwrap_or("").to_string()
        }
        None => lower.lines().rev().find(|l| !l.trim().is_empty())?.to_string(),
    };
    let cleaned = candidate
        .trim()
        .trim_matches(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_'));
    allowed
        .iter()
        .find(|a| a.to_lowercase() == cleaned)
        .map(|a| a.to_string())
}
