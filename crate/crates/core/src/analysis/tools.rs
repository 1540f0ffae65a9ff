use std::collections::BTreeMap;

use serde::Serialize;

use crate::approach::Trajectory;
use crate::shell::{command_name, split_stages, Separator};

/// Shell usage across agent trajectories.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CommandStats {
    /// Stage count per command name (`git <sub>` for git).
    pub counts: BTreeMap<String, u64>,
    pub pipe_count: u64,
    /// `&&`, `||`, `;` and newline separators.
    pub chain_count: u64,
    pub experiments: u64,
    pub total_commands: u64,
    pub total_steps: u64,
    pub commands_per_experiment: f64,
    pub steps_per_experiment: f64,
}

impl CommandStats {
    /// The `n` most used commands, ties by name.
    pub fn top(&self, n: usize) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(k, c)| (k.as_str(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v.truncate(n);
        v
    }
}

/// Count commands and composition operators over every tool call.
pub fn tool_usage<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> CommandStats {
    let mut stats = CommandStats::default();
    for t in trajectories {
        stats.experiments += 1;
        for command in t.commands() {
            stats.total_steps += 1;
            for stage in split_stages(command) {
                match stage.separator {
                    Some(Separator::Pipe) => stats.pipe_count += 1,
                    Some(_) => stats.chain_count += 1,
                    None => {}
                }
                if stage.text.trim().is_empty() {
                    continue;
                }
                stats.total_commands += 1;
                *stats.counts.entry(command_name(&stage)).or_default() += 1;
            }
        }
    }
    if stats.experiments > 0 {
        stats.commands_per_experiment = stats.total_commands as f64 / stats.experiments as f64;
        stats.steps_per_experiment = stats.total_steps as f64 / stats.experiments as f64;
    }
    stats
}
