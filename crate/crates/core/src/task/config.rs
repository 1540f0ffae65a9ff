use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{ContextRecipe, Sample, Task, Unit, UNCLEAR};

/// A configuration problem, naming the offending key.
#[derive(Debug, Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, rename = "task")]
    tasks: Vec<RawTask>,
    #[serde(default)]
    sample_files: Vec<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    id: String,
    unit: Unit,
    question: String,
    categories: Vec<String>,
    #[serde(default = "default_true")]
    allow_unclear: bool,
    guidelines: Option<PathBuf>,
    guidelines_text: Option<String>,
    context: ContextRecipe,
}

fn default_true() -> bool {
    true
}

/// All tasks and their samples. Read-only after loading.
#[derive(Debug, Clone, Default)]
pub struct TaskSet {
    tasks: Vec<Task>,
    samples: Vec<Sample>,
}

impl TaskSet {
    /// Load a task configuration file. Relative paths inside it (guidelines,
    /// sample files, repository fixtures) resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map(|s| format!("byte {}", s.start))
                .unwrap_or_else(|| "config".into());
            ConfigError::new(key, e.message().to_string())
        })?;

        let mut tasks = Vec::with_capacity(raw.tasks.len());
        let mut seen = BTreeSet::new();
        for (i, rt) in raw.tasks.into_iter().enumerate() {
            let key = format!("task[{i}]");
            if !seen.insert(rt.id.clone()) {
                return Err(ConfigError::new(
                    format!("{key}.id"),
                    format!("duplicate task id '{}'", rt.id),
                ));
            }
            tasks.push(build_task(rt, &key, base)?);
        }

        let mut samples = Vec::new();
        for (i, file) in raw.sample_files.iter().enumerate() {
            let path = base.join(file);
            let text = fs::read_to_string(&path).map_err(|e| {
                ConfigError::new(format!("sample_files[{i}]"), format!("{}: {e}", path.display()))
            })?;
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let mut sample: Sample = serde_json::from_str(line).map_err(|e| {
                    ConfigError::new(format!("{}:{}", file.display(), n + 1), e.to_string())
                })?;
                if sample.repo.fixture.is_relative() {
                    sample.repo.fixture = base.join(&sample.repo.fixture);
                }
                samples.push((format!("{}:{}", file.display(), n + 1), sample));
            }
        }
        Self::assemble(tasks, samples)
    }

    /// Build a task set from already-constructed parts, enforcing the same
    /// invariants as [`TaskSet::load`].
    pub fn from_parts(tasks: Vec<Task>, samples: Vec<Sample>) -> Result<Self, ConfigError> {
        for (i, t) in tasks.iter().enumerate() {
            validate_categories(&t.categories, &format!("task[{i}].categories"))?;
        }
        let keyed = samples
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("sample[{i}]"), s))
            .collect();
        Self::assemble(tasks, keyed)
    }

    fn assemble(tasks: Vec<Task>, samples: Vec<(String, Sample)>) -> Result<Self, ConfigError> {
        let by_id: HashMap<&str, &Task> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
        let mut ids = BTreeSet::new();
        for (key, s) in &samples {
            let task = by_id.get(s.task_id.as_str()).ok_or_else(|| {
                ConfigError::new(format!("{key} task"), format!("undefined task '{}'", s.task_id))
            })?;
            if !ids.insert((s.task_id.clone(), s.id.clone())) {
                return Err(ConfigError::new(
                    format!("{key} id"),
                    format!("duplicate sample id '{}' in task '{}'", s.id, s.task_id),
                ));
            }
            if !task.is_label(&s.ground_truth) {
                return Err(ConfigError::new(
                    format!("{key} ground_truth"),
                    format!("'{}' is not a category of task '{}'", s.ground_truth, task.id),
                ));
            }
            if !s.focus.matches_unit(task.unit) {
                return Err(ConfigError::new(
                    format!("{key} focus"),
                    format!("focus does not match unit '{}' of task '{}'", task.unit, task.id),
                ));
            }
            if !(s.repo_size_mb >= 0.0) {
                return Err(ConfigError::new(
                    format!("{key} repo_size_mb"),
                    "must be a nonnegative number",
                ));
            }
        }
        Ok(Self {
            tasks,
            samples: samples.into_iter().map(|(_, s)| s).collect(),
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn sample(&self, task_id: &str, sample_id: &str) -> Option<&Sample> {
        self.samples
            .iter()
            .find(|s| s.task_id == task_id && s.id == sample_id)
    }

    pub fn samples_of<'a>(&'a self, task_id: &'a str) -> impl Iterator<Item = &'a Sample> + 'a {
        self.samples.iter().filter(move |s| s.task_id == task_id)
    }
}

fn validate_categories(categories: &[String], key: &str) -> Result<(), ConfigError> {
    if categories.is_empty() {
        return Err(ConfigError::new(key, "at least one category is required"));
    }
    let mut seen = BTreeSet::new();
    for c in categories {
        if c.trim().is_empty() {
            return Err(ConfigError::new(key, "categories must be non-empty"));
        }
        if c.eq_ignore_ascii_case(UNCLEAR) {
            return Err(ConfigError::new(
                key,
                "'unclear' is implicit; use allow_unclear instead of listing it",
            ));
        }
        if !seen.insert(c.to_lowercase()) {
            return Err(ConfigError::new(key, format!("duplicate category '{c}'")));
        }
    }
    Ok(())
}

fn build_task(rt: RawTask, key: &str, base: &Path) -> Result<Task, ConfigError> {
    validate_categories(&rt.categories, &format!("{key}.categories"))?;
    let guidelines = match (rt.guidelines, rt.guidelines_text) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::new(
                format!("{key}.guidelines"),
                "set either guidelines or guidelines_text, not both",
            ))
        }
        (Some(path), None) => {
            let full = base.join(&path);
            fs::read_to_string(&full).map_err(|e| {
                ConfigError::new(format!("{key}.guidelines"), format!("{}: {e}", full.display()))
            })?
        }
        (None, Some(text)) => text,
        (None, None) => String::new(),
    };
    if rt.context.simple.is_empty() {
        return Err(ConfigError::new(
            format!("{key}.context.simple"),
            "at least one context source is required",
        ));
    }
    Ok(Task {
        id: rt.id,
        unit: rt.unit,
        question: rt.question,
        categories: rt.categories,
        allow_unclear: rt.allow_unclear,
        guidelines,
        recipe: rt.context,
    })
}
