use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ExperimentPlan, ExperimentRecord, PlanEntry, RunnerError, RECORD_SCHEMA, TRAJECTORY_SCHEMA};
use crate::approach::Trajectory;

const RESULTS: &str = "results.jsonl";
const TRAJECTORIES: &str = "trajectories";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTrajectory {
    pub schema: String,
    pub experiment_id: String,
    #[serde(flatten)]
    pub trajectory: Trajectory,
}

/// A results line that could not be used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptRecord {
    pub line: usize,
    pub reason: String,
}

/// What a store already holds relative to a plan.
#[derive(Debug, Clone, Default)]
pub struct ResumeState {
    /// Plan entries still to run, in plan order.
    pub remaining: Vec<PlanEntry>,
    pub completed: usize,
    pub corrupt: Vec<CorruptRecord>,
    pub duplicates: usize,
}

/// Append-only results file plus one trajectory file per experiment.
///
/// Trajectories are written (atomically) before their record is appended,
/// so a record never points at a missing trajectory unless files were
/// removed externally.
pub struct Store {
    root: PathBuf,
    results: Mutex<()>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RunnerError> {
        let root = root.into();
        fs::create_dir_all(root.join(TRAJECTORIES))?;
        Ok(Self {
            root,
            results: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn results_path(&self) -> PathBuf {
        self.root.join(RESULTS)
    }

    pub fn trajectory_ref(experiment_id: &str) -> String {
        format!("{TRAJECTORIES}/{experiment_id}.json")
    }

    pub fn write_trajectory(&self, experiment_id: &str, trajectory: &Trajectory) -> Result<String, RunnerError> {
        let rel = Self::trajectory_ref(experiment_id);
        let stored = StoredTrajectory {
            schema: TRAJECTORY_SCHEMA.into(),
            experiment_id: experiment_id.into(),
            trajectory: trajectory.clone(),
        };
        let text = serde_json::to_string_pretty(&stored).map_err(|e| RunnerError::Store(e.to_string()))?;
        write_atomic(&self.root.join(&rel), text.as_bytes())?;
        Ok(rel)
    }

    pub fn read_trajectory(&self, trajectory_ref: &str) -> Result<Trajectory, RunnerError> {
        let text = fs::read_to_string(self.root.join(trajectory_ref))?;
        let stored: StoredTrajectory =
            serde_json::from_str(&text).map_err(|e| RunnerError::Store(format!("{trajectory_ref}: {e}")))?;
        if stored.schema != TRAJECTORY_SCHEMA {
            return Err(RunnerError::Store(format!(
                "{trajectory_ref}: unsupported schema '{}'",
                stored.schema
            )));
        }
        Ok(stored.trajectory)
    }

    pub fn append(&self, record: &ExperimentRecord) -> Result<(), RunnerError> {
        let mut line = serde_json::to_string(record).map_err(|e| RunnerError::Store(e.to_string()))?;
        line.push('\n');
        let _guard = self.results.lock().unwrap();
        let mut f = OpenOptions::new().create(true).append(true).open(self.results_path())?;
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    /// Parse every results line; unusable lines are reported, not fatal.
    pub fn load(&self) -> Result<(Vec<ExperimentRecord>, Vec<CorruptRecord>), RunnerError> {
        let path = self.results_path();
        if !path.exists() {
            return Ok((Vec::new(), Vec::new()));
        }
        let mut records = Vec::new();
        let mut corrupt = Vec::new();
        for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ExperimentRecord>(&line) {
                Ok(r) if r.schema == RECORD_SCHEMA => records.push(r),
                Ok(r) => corrupt.push(CorruptRecord {
                    line: i + 1,
                    reason: format!("unsupported schema '{}'", r.schema),
                }),
                Err(e) => corrupt.push(CorruptRecord {
                    line: i + 1,
                    reason: e.to_string(),
                }),
            }
        }
        Ok((records, corrupt))
    }

    /// Valid records only, deduplicated by key (first wins).
    pub fn records(&self) -> Result<Vec<ExperimentRecord>, RunnerError> {
        let (records, _) = self.load()?;
        let mut seen = HashSet::new();
        Ok(records.into_iter().filter(|r| seen.insert(r.key())).collect())
    }

    /// Entries of `plan` without a valid record. A record is valid when it
    /// parses, carries the current schema and its trajectory is readable.
    pub fn resume(&self, plan: &ExperimentPlan) -> Result<ResumeState, RunnerError> {
        let (records, mut corrupt) = self.load()?;
        let mut done = HashSet::new();
        let mut duplicates = 0;
        for r in records {
            if let Err(e) = self.read_trajectory(&r.trajectory_ref) {
                corrupt.push(CorruptRecord {
                    line: 0,
                    reason: format!("{}: {e}", r.key()),
                });
                continue;
            }
            if !done.insert(r.key()) {
                duplicates += 1;
            }
        }
        for c in &corrupt {
            log::warn!("results line {}: {}; entry will be re-run", c.line, c.reason);
        }
        let remaining: Vec<PlanEntry> = plan
            .entries
            .iter()
            .filter(|e| !done.contains(&e.key()))
            .cloned()
            .collect();
        Ok(ResumeState {
            completed: plan.entries.len() - remaining.len(),
            remaining,
            corrupt,
            duplicates,
        })
    }

    /// Rewrite the results file with exactly one valid record per plan entry,
    /// in plan order. Records outside the plan are kept after them; records
    /// without a readable trajectory are dropped.
    pub fn compact(&self, plan: &ExperimentPlan) -> Result<(), RunnerError> {
        let _guard = self.results.lock().unwrap();
        let (records, _) = self.load()?;
        let mut by_key: BTreeMap<String, ExperimentRecord> = BTreeMap::new();
        for r in records {
            if self.read_trajectory(&r.trajectory_ref).is_ok() {
                by_key.entry(r.key()).or_insert(r);
            }
        }
        let mut out = String::new();
        for e in &plan.entries {
            if let Some(r) = by_key.remove(&e.key()) {
                out.push_str(&serde_json::to_string(&r).map_err(|e| RunnerError::Store(e.to_string()))?);
                out.push('\n');
            }
        }
        for r in by_key.values() {
            out.push_str(&serde_json::to_string(r).map_err(|e| RunnerError::Store(e.to_string()))?);
            out.push('\n');
        }
        write_atomic(&self.results_path(), out.as_bytes())
    }
}

fn write_atomic(path: &Path, data: &[u8]) -> Result<(), RunnerError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(data)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| RunnerError::Store(e.to_string()))?;
    Ok(())
}
