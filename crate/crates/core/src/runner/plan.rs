use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approach::{ApproachKind, ApproachVariant};
use crate::task::{TaskSet, Unit};

/// Systematic exclusions, applied identically to every variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filters {
    /// Samples whose repository is strictly larger than this are excluded.
    pub max_repo_size_mb: f64,
}

impl Default for Filters {
    fn default() -> Self {
        Self {
            max_repo_size_mb: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExclusionReason {
    Size { repo_size_mb: f64, limit_mb: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub task_id: String,
    pub sample_id: String,
    #[serde(flatten)]
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlanEntry {
    pub task_id: String,
    pub sample_id: String,
    pub variant: ApproachVariant,
}

impl PlanEntry {
    /// `task/sample/kind@model`; unique within a plan.
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.task_id, self.sample_id, self.variant.name())
    }

    /// File-system safe identifier derived from the key.
    pub fn experiment_id(&self) -> String {
        let clean = |s: &str| {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || "._@-".contains(c) { c } else { '_' })
                .collect::<String>()
        };
        let digest = Sha256::digest(self.key().as_bytes());
        format!(
            "{}--{}--{}--{}",
            clean(&self.task_id),
            clean(&self.sample_id),
            clean(&self.variant.name()),
            &hex::encode(digest)[..8]
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub entries: Vec<PlanEntry>,
    pub excluded: Vec<Exclusion>,
    pub seed: u64,
}

/// Seed of one entry: the first eight bytes of SHA-256(seed ‖ key).
pub fn sub_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Tasks × samples × variants, minus excluded samples and memorization on
/// line-level tasks. Entries are ordered by task, sample, then variant as given.
pub fn plan(tasks: &TaskSet, variants: &[ApproachVariant], filters: &Filters, seed: u64) -> ExperimentPlan {
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for task in tasks.tasks() {
        for sample in tasks.samples_of(&task.id) {
            if sample.repo_size_mb > filters.max_repo_size_mb {
                excluded.push(Exclusion {
                    task_id: task.id.clone(),
                    sample_id: sample.id.clone(),
                    reason: ExclusionReason::Size {
                        repo_size_mb: sample.repo_size_mb,
                        limit_mb: filters.max_repo_size_mb,
                    },
                });
                continue;
            }
            for v in variants {
                if v.kind == ApproachKind::SimpleMemorization && task.unit == Unit::Line {
                    continue;
                }
                entries.push(PlanEntry {
                    task_id: task.id.clone(),
                    sample_id: sample.id.clone(),
                    variant: v.clone(),
                });
            }
        }
    }
    ExperimentPlan { entries, excluded, seed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{ContextRecipe, ContextSource, Focus, RepoSpec, Sample, Task};
    use std::collections::BTreeMap;

    fn set() -> TaskSet {
        let task = |id: &str, unit| Task {
            id: id.into(),
            unit,
            question: "q".into(),
            categories: vec!["a".into(), "b".into()],
            allow_unclear: true,
            guidelines: String::new(),
            recipe: ContextRecipe {
                simple: vec![ContextSource::CommitMessage],
                agent: vec![],
            },
        };
        let sample = |task: &str, id: &str, focus, mb| Sample {
            id: id.into(),
            task_id: task.into(),
            repo: RepoSpec {
                name: "o/r".into(),
                fixture: "f".into(),
                revision: None,
            },
            aux_files: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            focus,
            ground_truth: "a".into(),
            repo_size_mb: mb,
        };
        let line = || Focus::Line {
            commit: "c".into(),
            file: "f".into(),
            line: 1,
        };
        TaskSet::from_parts(
            vec![task("repo", Unit::Repository), task("lines", Unit::Line)],
            vec![
                sample("repo", "small", Focus::None, 1000.0),
                sample("repo", "big", Focus::None, 1001.0),
                sample("lines", "l1", line(), 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn excludes_oversize_and_line_memorization() {
        let variants = ApproachVariant::default_set();
        let p = plan(&set(), &variants, &Filters::default(), 7);
        assert_eq!(p.excluded.len(), 1);
        assert_eq!(p.excluded[0].sample_id, "big");
        assert_eq!(p.entries.len(), 8 + 7);
        assert!(!p
            .entries
            .iter()
            .any(|e| e.task_id == "lines" && e.variant.kind == ApproachKind::SimpleMemorization));
    }

    #[test]
    fn sub_seeds_depend_on_seed_and_key() {
        assert_eq!(sub_seed(1, "a"), sub_seed(1, "a"));
        assert_ne!(sub_seed(1, "a"), sub_seed(2, "a"));
        assert_ne!(sub_seed(1, "a"), sub_seed(1, "b"));
    }

    #[test]
    fn experiment_ids_are_path_safe() {
        let e = PlanEntry {
            task_id: "t".into(),
            sample_id: "a/b c".into(),
            variant: ApproachVariant::new(ApproachKind::AgentNative, "m"),
        };
        let id = e.experiment_id();
        assert!(!id.contains('/') && !id.contains(' '));
        assert!(id.starts_with("t--a_b_c--agent-native@m--"));
    }
}
