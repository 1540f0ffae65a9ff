use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approach::{ApproachKind, ApproachVariant};
use crate::runner::ExperimentRecord;

pub const DEFAULT_MIN_DISAGREE: usize = 2;

/// Memorization and direct-answer variants do not vote on disagreements.
pub fn is_eligible(variant: &ApproachVariant) -> bool {
    !matches!(variant.kind, ApproachKind::SimpleMemorization | ApproachKind::SimpleNoCot)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementCase {
    pub task_id: String,
    pub sample_id: String,
    pub ground_truth: String,
    /// Every variant's prediction; `None` for failed experiments.
    pub predictions: BTreeMap<String, Option<String>>,
    /// Eligible variants whose prediction differs from the ground truth.
    /// Failures do not count.
    pub disagree_count: usize,
}

impl DisagreementCase {
    pub fn key(&self) -> String {
        format!("{}/{}", self.task_id, self.sample_id)
    }
}

/// Samples on which at least `min_disagree` eligible variants predicted a
/// label other than the ground truth, in order of first appearance.
pub fn find_disagreements(records: &[ExperimentRecord], min_disagree: usize) -> Vec<DisagreementCase> {
    let mut cases: Vec<DisagreementCase> = Vec::new();
    for r in records {
        let idx = match cases
            .iter()
            .position(|c| c.task_id == r.task_id && c.sample_id == r.sample_id)
        {
            Some(i) => i,
            None => {
                cases.push(DisagreementCase {
                    task_id: r.task_id.clone(),
                    sample_id: r.sample_id.clone(),
                    ground_truth: r.ground_truth.clone(),
                    predictions: BTreeMap::new(),
                    disagree_count: 0,
                });
                cases.len() - 1
            }
        };
        let case = &mut cases[idx];
        case.predictions.insert(r.variant.name(), r.outcome.predicted.clone());
        if is_eligible(&r.variant) {
            if let Some(p) = &r.outcome.predicted {
                if *p != r.ground_truth {
                    case.disagree_count += 1;
                }
            }
        }
    }
    cases.retain(|c| c.disagree_count >= min_disagree);
    cases
}

/// Apportion `n` seats proportionally to `sizes`: floors first, then one
/// more seat each for the largest remainders, earlier strata winning ties.
pub fn largest_remainder(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut seats: Vec<usize> = sizes.iter().map(|s| n * s / total).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(n * sizes[i] % total));
    let left = n - seats.iter().sum::<usize>();
    for &i in order.iter().take(left) {
        seats[i] += 1;
    }
    seats
}

/// Proportional stratified sample by task without replacement. The result
/// keeps the input order. Asking for at least as many cases as exist
/// returns all of them.
pub fn stratified_sample(cases: &[DisagreementCase], n: usize, seed: u64) -> Vec<DisagreementCase> {
    if n >= cases.len() {
        if n > cases.len() {
            log::warn!("requested {n} cases but only {} exist; taking all", cases.len());
        }
        return cases.to_vec();
    }
    let mut strata: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        match strata.iter_mut().find(|(t, _)| *t == c.task_id) {
            Some((_, idx)) => idx.push(i),
            None => strata.push((&c.task_id, vec![i])),
        }
    }
    let sizes: Vec<usize> = strata.iter().map(|(_, v)| v.len()).collect();
    let seats = largest_remainder(&sizes, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(n);
    for ((_, mut members), k) in strata.into_iter().zip(seats) {
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..k]);
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| cases[i].clone()).collect()
}
