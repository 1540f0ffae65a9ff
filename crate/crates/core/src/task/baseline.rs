use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Sample, Task};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("task '{0}' has no samples")]
    NoSamples(String),
    #[error("sample '{sample}' has label '{label}' outside task '{task}'")]
    UnknownLabel {
        task: String,
        sample: String,
        label: String,
    },
}

/// Accuracy of the uniform-random and always-majority predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRates {
    pub k: usize,
    pub n: usize,
    pub random: f64,
    pub majority: f64,
    pub majority_label: String,
    pub majority_count: usize,
}

/// Random accuracy is `1/K`; majority accuracy is the largest class share,
/// ties broken by declared category order (`unclear` last).
pub fn baseline_rates<'a, I>(task: &Task, samples: I) -> Result<BaselineRates, BaselineError>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let labels = task.answer_set(true);
    let mut labels: Vec<&str> = labels;
    if !labels.contains(&super::UNCLEAR) {
        // ground truth may still be unclear even when predictions may not be
        labels.push(super::UNCLEAR);
    }
    let mut counts = vec![0usize; labels.len()];
    let mut n = 0usize;
    for s in samples {
        let idx = labels
            .iter()
            .position(|l| *l == s.ground_truth)
            .ok_or_else(|| BaselineError::UnknownLabel {
                task: task.id.clone(),
                sample: s.id.clone(),
                label: s.ground_truth.clone(),
            })?;
        counts[idx] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(BaselineError::NoSamples(task.id.clone()));
    }
    // first maximum in declared order
    let (best, &majority_count) = counts
        .iter()
        .enumerate()
        .fold((0, &0), |acc, (i, c)| if *c > *acc.1 { (i, c) } else { acc });
    let k = task.k();
    Ok(BaselineRates {
        k,
        n,
        random: 1.0 / k as f64,
        majority: majority_count as f64 / n as f64,
        majority_label: labels[best].to_string(),
        majority_count,
    })
}
