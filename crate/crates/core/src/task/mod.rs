//! Classification tasks, their samples and ground truth.

mod baseline;
mod config;
mod context;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use baseline::{baseline_rates, BaselineError, BaselineRates};
pub use config::{ConfigError, TaskSet};
pub use context::{agent_aux_files, assemble_context, ContextBundle, ContextPart};
pub use prompt::{build_prompt, Prompt, PromptStyle};

/// The extra category every task may answer with instead of guessing.
pub const UNCLEAR: &str = "unclear";

/// Granularity of the artifact being classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    Repository,
    Line,
    Review,
    Commit,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Repository => "repository",
            Unit::Line => "line",
            Unit::Review => "review",
            Unit::Commit => "commit",
        };
        f.write_str(s)
    }
}

/// A named piece of context an approach may receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextSource {
    DirectoryListing,
    ReadmeFile,
    DiffHunkWithMarkedLine,
    PrMetadataDump,
    ReviewComment,
    CommitMessage,
    MinimalIdentifier,
}

impl ContextSource {
    pub fn key(self) -> &'static str {
        match self {
            ContextSource::DirectoryListing => "directory-listing",
            ContextSource::ReadmeFile => "readme-file",
            ContextSource::DiffHunkWithMarkedLine => "diff-hunk-with-marked-line",
            ContextSource::PrMetadataDump => "pr-metadata-dump",
            ContextSource::ReviewComment => "review-comment",
            ContextSource::CommitMessage => "commit-message",
            ContextSource::MinimalIdentifier => "minimal-identifier",
        }
    }

    /// Heading used when the source is inlined into a prompt.
    pub fn label(self) -> &'static str {
        match self {
            ContextSource::DirectoryListing => "Directory listing",
            ContextSource::ReadmeFile => "README",
            ContextSource::DiffHunkWithMarkedLine => "Diff hunk (marked line prefixed with >>>)",
            ContextSource::PrMetadataDump => "Pull request metadata",
            ContextSource::ReviewComment => "Review comment",
            ContextSource::CommitMessage => "Commit message",
            ContextSource::MinimalIdentifier => "Artifact",
        }
    }

    /// File name used when the source is placed into an agent workspace.
    pub fn aux_file_name(self) -> String {
        let ext = match self {
            ContextSource::PrMetadataDump => "json",
            ContextSource::DiffHunkWithMarkedLine => "diff",
            _ => "txt",
        };
        format!("{}.{ext}", self.key())
    }
}

impl fmt::Display for ContextSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Which context sources each approach family receives.
///
/// Memorization always receives the minimal identifier only, so it has no
/// entry here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRecipe {
    /// Sources inlined into the prompt of single-turn approaches.
    pub simple: Vec<ContextSource>,
    /// Sources placed as files into the agent workspace.
    #[serde(default)]
    pub agent: Vec<ContextSource>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: String,
    pub unit: Unit,
    pub question: String,
    /// Declared categories in order; never contains [`UNCLEAR`].
    pub categories: Vec<String>,
    pub allow_unclear: bool,
    /// Labeling guidelines, inserted verbatim into every prompt.
    pub guidelines: String,
    pub recipe: ContextRecipe,
}

impl Task {
    /// Number of answer options, counting `unclear` when allowed.
    pub fn k(&self) -> usize {
        self.categories.len() + usize::from(self.allow_unclear)
    }

    /// Labels a prediction may take. `unclear` is appended when the task
    /// allows it and `with_unclear` holds.
    pub fn answer_set(&self, with_unclear: bool) -> Vec<&str> {
        let mut out: Vec<&str> = self.categories.iter().map(String::as_str).collect();
        if self.allow_unclear && with_unclear {
            out.push(UNCLEAR);
        }
        out
    }

    /// Whether `label` is a valid ground-truth value for this task.
    pub fn is_label(&self, label: &str) -> bool {
        label == UNCLEAR || self.categories.iter().any(|c| c == label)
    }
}

/// Repository locator plus revision.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepoSpec {
    /// Public name, e.g. `owner/project`. Used as the memorization identifier.
    pub name: String,
    /// Local fixture: a git bundle, a git working copy, or a plain directory.
    pub fixture: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<String>,
}

/// Unit-specific anchor of the artifact inside its repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Focus {
    None,
    Line { commit: String, file: String, line: u32 },
    Commit { commit: String },
    Review { pull_request: u64, comment_id: String },
}

impl Focus {
    pub fn matches_unit(&self, unit: Unit) -> bool {
        matches!(
            (self, unit),
            (Focus::None, Unit::Repository)
                | (Focus::Line { .. }, Unit::Line)
                | (Focus::Commit { .. }, Unit::Commit)
                | (Focus::Review { .. }, Unit::Review)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    #[serde(rename = "task")]
    pub task_id: String,
    pub repo: RepoSpec,
    /// Extra files placed under `aux/` in agent workspaces.
    #[serde(default)]
    pub aux_files: BTreeMap<String, String>,
    /// Pre-extracted context texts keyed by source.
    #[serde(default)]
    pub artifacts: BTreeMap<ContextSource, String>,
    pub focus: Focus,
    pub ground_truth: String,
    #[serde(default)]
    pub repo_size_mb: f64,
}

impl Sample {
    /// The smallest identification of the artifact: what memorization sees.
    pub fn minimal_identifier(&self) -> String {
        let repo = &self.repo.name;
        match &self.focus {
            Focus::None => repo.clone(),
            Focus::Commit { commit } => format!("{repo}@{commit}"),
            Focus::Line { commit, file, line } => format!("{repo}@{commit}:{file}:{line}"),
            Focus::Review { pull_request, comment_id } => {
                format!("{repo}#{pull_request} review comment {comment_id}")
            }
        }
    }
}
