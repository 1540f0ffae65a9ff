use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{SecondsFormat, Utc};
use rayon::prelude::*;
use serde::Serialize;

use super::{sub_seed, Correctness, ExperimentPlan, ExperimentRecord, PlanEntry, RunnerError, Store, RECORD_SCHEMA};
use crate::accounting::{cost, PriceBook, DEFAULT_CACHE_GRID};
use crate::approach::{ApproachRegistry, RunContext, ShellExecutor};
use crate::gateway::{BackendContext, BackendRegistry, FailureKind, Gateway, RetryPolicy};
use crate::sandbox::{Isolation, Limits, Workspace};
use crate::task::{agent_aux_files, TaskSet};

/// Everything that is shared by all experiments of a run.
pub struct RunnerConfig {
    pub backend: String,
    pub workers: usize,
    pub retry: RetryPolicy,
    pub limits: Limits,
    pub cache_grid: u64,
    /// Parent directory for workspaces; the system temp directory when `None`.
    pub workspace_base: Option<PathBuf>,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            backend: "mock".into(),
            workers: 1,
            retry: RetryPolicy::default(),
            limits: Limits::default(),
            cache_grid: DEFAULT_CACHE_GRID,
            workspace_base: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub planned: usize,
    pub excluded_samples: usize,
    pub already_done: usize,
    pub executed: usize,
    pub requeued_corrupt: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub failures: BTreeMap<FailureKind, usize>,
}

pub struct Runner<'a> {
    pub tasks: &'a TaskSet,
    pub prices: &'a PriceBook,
    pub backends: &'a BackendRegistry,
    pub approaches: &'a ApproachRegistry,
    pub isolation: Arc<dyn Isolation>,
    pub config: RunnerConfig,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl Runner<'_> {
    /// Reject plans that reference unknown tasks, samples, approaches or
    /// models without a price sheet, before anything runs.
    pub fn check(&self, plan: &ExperimentPlan) -> Result<(), RunnerError> {
        for e in &plan.entries {
            if self.tasks.sample(&e.task_id, &e.sample_id).is_none() {
                return Err(RunnerError::Config(format!("unknown sample {}", e.key())));
            }
            self.approaches.for_variant(&e.variant)?;
            self.prices.get(&e.variant.model_id)?;
        }
        Ok(())
    }

    /// Run every entry of `plan` that has no valid record in `store` yet, then
    /// compact the results file into plan order.
    pub fn execute_plan(&self, plan: &ExperimentPlan, store: &Store) -> Result<RunSummary, RunnerError> {
        self.check(plan)?;
        let state = store.resume(plan)?;
        log::info!(
            "{} entries planned, {} done, {} to run",
            plan.entries.len(),
            state.completed,
            state.remaining.len()
        );
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers.max(1))
            .build()
            .map_err(|e| RunnerError::Config(e.to_string()))?;
        let executed: Vec<ExperimentRecord> = pool.install(|| {
            state
                .remaining
                .par_iter()
                .map(|entry| self.run_entry(plan.seed, entry, store))
                .collect::<Result<_, _>>()
        })?;
        store.compact(plan)?;

        let mut summary = RunSummary {
            planned: plan.entries.len(),
            excluded_samples: plan.excluded.len(),
            already_done: state.completed,
            executed: executed.len(),
            requeued_corrupt: state.corrupt.len(),
            ..RunSummary::default()
        };
        for r in store.records()? {
            match r.correct {
                Correctness::Correct => summary.correct += 1,
                Correctness::Incorrect => summary.incorrect += 1,
                Correctness::ExcludedError => {}
            }
            if let Some(f) = r.outcome.failure {
                *summary.failures.entry(f).or_default() += 1;
            }
        }
        Ok(summary)
    }

    /// Run one experiment and persist its trajectory and record.
    pub fn run_entry(&self, seed: u64, entry: &PlanEntry, store: &Store) -> Result<ExperimentRecord, RunnerError> {
        let started_at = now();
        let task = self
            .tasks
            .task(&entry.task_id)
            .ok_or_else(|| RunnerError::Config(format!("unknown task {}", entry.task_id)))?;
        let sample = self
            .tasks
            .sample(&entry.task_id, &entry.sample_id)
            .ok_or_else(|| RunnerError::Config(format!("unknown sample {}", entry.key())))?;
        let variant = &entry.variant;
        let sheet = self.prices.get(&variant.model_id)?;
        let approach = self.approaches.for_variant(variant)?;
        let entry_seed = sub_seed(seed, &entry.key());

        let backend = self.backends.create(
            &self.config.backend,
            &BackendContext {
                model_id: variant.model_id.clone(),
                variant: variant.name(),
                task_id: task.id.clone(),
                sample_id: sample.id.clone(),
            },
        )?;
        let gateway = Gateway::with_retry(backend, self.config.retry);

        let mut workspace = if variant.kind.is_agent() {
            Some(Workspace::provision(
                &sample.repo,
                &agent_aux_files(task, sample),
                self.isolation.clone(),
                self.config.limits,
                self.config.workspace_base.as_deref(),
            )?)
        } else {
            None
        };
        let cache_grid = (variant.kind.is_agent() && sheet.cache_supported).then_some(self.config.cache_grid);
        let ctx = RunContext {
            task,
            sample,
            gateway: &gateway,
            shell: workspace.as_mut().map(|w| w as &mut dyn ShellExecutor),
            seed: entry_seed,
            cache_grid,
        };
        let result = approach.run(variant, ctx);
        if let Some(ws) = &workspace {
            ws.teardown()?;
        }
        let (outcome, trajectory) = result?;

        let experiment_id = entry.experiment_id();
        let trajectory_ref = store.write_trajectory(&experiment_id, &trajectory)?;
        let record = ExperimentRecord {
            schema: RECORD_SCHEMA.into(),
            experiment_id,
            task_id: task.id.clone(),
            sample_id: sample.id.clone(),
            variant: variant.clone(),
            seed: entry_seed,
            ground_truth: sample.ground_truth.clone(),
            correct: Correctness::of(&outcome, &sample.ground_truth),
            cost: cost(&outcome.usage_total, sheet)?,
            outcome,
            trajectory_ref,
            started_at,
            finished_at: now(),
        };
        store.append(&record)?;
        Ok(record)
    }
}
