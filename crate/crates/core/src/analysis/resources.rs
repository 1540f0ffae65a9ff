use std::collections::BTreeMap;

use serde::Serialize;

use crate::accounting::{cache_savings, cost, AccountingError, PriceBook};
use crate::gateway::{FailureKind, Usage};
use crate::runner::ExperimentRecord;

/// Resource use of one variant. Token, cost and time means leave out
/// context-overflow failures; error counts include everything.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceRow {
    pub variant: String,
    pub experiments: usize,
    /// Records that enter the means.
    pub counted: usize,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    pub mean_cache_read_tokens: f64,
    pub mean_cache_write_tokens: f64,
    pub mean_cost: f64,
    pub total_cost: f64,
    pub mean_wall_time_ms: f64,
    /// Savings over the counted records when the model supports caching.
    pub cache_savings: Option<f64>,
    pub errors: BTreeMap<FailureKind, usize>,
}

/// Group records by variant in order of first appearance.
fn by_variant(records: &[ExperimentRecord]) -> Vec<(String, Vec<&ExperimentRecord>)> {
    let mut order: Vec<(String, Vec<&ExperimentRecord>)> = Vec::new();
    for r in records {
        let name = r.variant.name();
        match order.iter_mut().find(|(n, _)| *n == name) {
            Some((_, rs)) => rs.push(r),
            None => order.push((name, vec![r])),
        }
    }
    order
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn resource_report(records: &[ExperimentRecord], prices: &PriceBook) -> Result<Vec<ResourceRow>, AccountingError> {
    let mut rows = Vec::new();
    for (variant, rs) in by_variant(records) {
        let sheet = prices.get(&rs[0].variant.model_id)?;
        let mut errors = BTreeMap::new();
        for r in &rs {
            if let Some(f) = r.outcome.failure {
                *errors.entry(f).or_default() += 1;
            }
        }
        let counted: Vec<&&ExperimentRecord> = rs
            .iter()
            .filter(|r| r.outcome.failure != Some(FailureKind::ContextOverflow))
            .collect();
        let usage: Usage = counted.iter().map(|r| r.outcome.usage_total).sum();
        let mut total_cost = 0.0;
        for r in &counted {
            total_cost += cost(&r.outcome.usage_total, sheet)?.total;
        }
        let wall: f64 = counted.iter().map(|r| r.outcome.wall_time_ms as f64).sum();
        let n = counted.len();
        rows.push(ResourceRow {
            variant,
            experiments: rs.len(),
            counted: n,
            mean_input_tokens: mean(usage.input_tokens as f64, n),
            mean_output_tokens: mean(usage.output_tokens as f64, n),
            mean_cache_read_tokens: mean(usage.cache_read_tokens as f64, n),
            mean_cache_write_tokens: mean(usage.cache_write_tokens as f64, n),
            mean_cost: mean(total_cost, n),
            total_cost,
            mean_wall_time_ms: mean(wall, n),
            cache_savings: if sheet.cache_supported {
                Some(cache_savings(&usage, sheet)?)
            } else {
                None
            },
            errors,
        });
    }
    Ok(rows)
}

/// Mean exploration depth of agent variants per task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepsRow {
    pub task_id: String,
    pub variant: String,
    pub experiments: usize,
    pub mean_steps: f64,
    pub mean_commands: f64,
    pub step_limit_hits: usize,
}

/// Steps and commands per (task, agent variant), context overflows excluded.
pub fn steps_per_task(records: &[ExperimentRecord]) -> Vec<StepsRow> {
    let mut groups: Vec<((String, String), Vec<&ExperimentRecord>)> = Vec::new();
    for r in records.iter().filter(|r| r.variant.kind.is_agent()) {
        if r.outcome.failure == Some(FailureKind::ContextOverflow) {
            continue;
        }
        let key = (r.task_id.clone(), r.variant.name());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rs)) => rs.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((task_id, variant), rs)| {
            let n = rs.len();
            StepsRow {
                task_id,
                variant,
                experiments: n,
                mean_steps: mean(rs.iter().map(|r| r.outcome.steps_used as f64).sum(), n),
                mean_commands: mean(rs.iter().map(|r| r.outcome.command_count as f64).sum(), n),
                step_limit_hits: rs
                    .iter()
                    .filter(|r| r.outcome.failure == Some(FailureKind::StepLimit))
                    .count(),
            }
        })
        .collect()
}
