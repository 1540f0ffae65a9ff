use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ContextSource, Focus, Sample, Task};
use crate::approach::ApproachFamily;
use crate::estimate_tokens;

/// Which approach family the context is assembled for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    /// Engineered context inlined for single-turn approaches.
    Engineered,
    /// Names of workspace entry points for agents; never file contents.
    AgentManifest,
    /// Only the artifact identifier.
    MinimalId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPart {
    pub label: String,
    pub text: String,
    /// The recipe asked for this source but the sample does not have it.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub absent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub kind: BundleKind,
    pub parts: Vec<ContextPart>,
    pub estimated_tokens: u64,
}

impl ContextBundle {
    fn new(kind: BundleKind, parts: Vec<ContextPart>) -> Self {
        let estimated_tokens = parts
            .iter()
            .map(|p| estimate_tokens(&p.label) + estimate_tokens(&p.text))
            .sum();
        Self {
            kind,
            parts,
            estimated_tokens,
        }
    }
}

/// Assemble what an approach of the given family receives for `sample`.
///
/// Sources missing from the sample are kept as parts marked `absent`.
pub fn assemble_context(task: &Task, sample: &Sample, family: ApproachFamily) -> ContextBundle {
    debug_assert_eq!(task.id, sample.task_id);
    match family {
        ApproachFamily::Memorization => ContextBundle::new(
            BundleKind::MinimalId,
            vec![ContextPart {
                label: ContextSource::MinimalIdentifier.label().to_string(),
                text: sample.minimal_identifier(),
                absent: false,
            }],
        ),
        ApproachFamily::Simple => {
            let parts = task
                .recipe
                .simple
                .iter()
                .map(|&source| inline_part(sample, source))
                .collect();
            ContextBundle::new(BundleKind::Engineered, parts)
        }
        ApproachFamily::Agent => ContextBundle::new(BundleKind::AgentManifest, manifest(task, sample)),
    }
}

fn inline_part(sample: &Sample, source: ContextSource) -> ContextPart {
    let text = match source {
        ContextSource::MinimalIdentifier => Some(sample.minimal_identifier()),
        _ => sample.artifacts.get(&source).cloned(),
    };
    match text {
        Some(text) => ContextPart {
            label: source.label().to_string(),
            text,
            absent: false,
        },
        None => ContextPart {
            label: source.label().to_string(),
            text: format!("({} not available)", source.label()),
            absent: true,
        },
    }
}

fn manifest(task: &Task, sample: &Sample) -> Vec<ContextPart> {
    let revision = sample
        .repo
        .revision
        .as_deref()
        .map(|r| format!(" at revision {r}"))
        .unwrap_or_default();
    let mut parts = vec![ContextPart {
        label: "Repository".into(),
        text: format!(
            "{} is checked out{revision} in the current working directory.",
            sample.repo.name
        ),
        absent: false,
    }];

    let focus = match &sample.focus {
        Focus::None => "The repository as a whole.".to_string(),
        Focus::Commit { commit } => format!("Commit {commit}."),
        Focus::Line { commit, file, line } => {
            format!("Line {line} of {file} as changed by commit {commit}.")
        }
        Focus::Review {
            pull_request,
            comment_id,
        } => format!("Review comment {comment_id} on pull request #{pull_request}."),
    };
    parts.push(ContextPart {
        label: "Artifact to classify".into(),
        text: focus,
        absent: false,
    });

    let files = agent_aux_files(task, sample);
    if !files.is_empty() {
        let listing = files
            .keys()
            .map(|name| format!("aux/{name}"))
            .collect::<Vec<_>>()
            .join("\n");
        parts.push(ContextPart {
            label: "Additional files".into(),
            text: listing,
            absent: false,
        });
    }
    parts
}

/// Files placed under `aux/` in the agent workspace: the sample's own
/// auxiliary files plus every agent-recipe source the sample provides.
pub fn agent_aux_files(task: &Task, sample: &Sample) -> BTreeMap<String, String> {
    let mut files = sample.aux_files.clone();
    for &source in &task.recipe.agent {
        if let Some(text) = sample.artifacts.get(&source) {
            files
                .entry(source.aux_file_name())
                .or_insert_with(|| text.clone());
        }
    }
    files
}
