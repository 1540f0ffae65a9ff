use serde::Serialize;

use crate::runner::{Correctness, ExperimentRecord};
use crate::task::UNCLEAR;

/// Truth (clear or unclear) against prediction (clear or unclear) for one
/// variant, over records without a fatal failure.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct UnclearConfusion {
    pub variant: String,
    pub clear_clear: usize,
    pub clear_unclear: usize,
    pub unclear_clear: usize,
    pub unclear_unclear: usize,
}

impl UnclearConfusion {
    pub fn total(&self) -> usize {
        self.clear_clear + self.clear_unclear + self.unclear_clear + self.unclear_unclear
    }
}

/// One matrix per variant, in order of first appearance.
pub fn unclear_confusion(records: &[ExperimentRecord]) -> Vec<UnclearConfusion> {
    let mut out: Vec<UnclearConfusion> = Vec::new();
    for r in records {
        let name = r.variant.name();
        let idx = match out.iter().position(|c| c.variant == name) {
            Some(i) => i,
            None => {
                out.push(UnclearConfusion {
                    variant: name,
                    ..Default::default()
                });
                out.len() - 1
            }
        };
        if r.correct == Correctness::ExcludedError {
            continue;
        }
        let Some(predicted) = &r.outcome.predicted else {
            continue;
        };
        let m = &mut out[idx];
        match (r.ground_truth == UNCLEAR, predicted == UNCLEAR) {
            (false, false) => m.clear_clear += 1,
            (false, true) => m.clear_unclear += 1,
            (true, false) => m.unclear_clear += 1,
            (true, true) => m.unclear_unclear += 1,
        }
    }
    out
}
