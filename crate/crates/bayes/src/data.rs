use std::collections::{BTreeSet, HashMap};

use repomine::runner::{ErrorPolicy, ExperimentRecord};
use serde::Serialize;
use thiserror::Error;

/// One (sample, approach) observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "cell", rename_all = "snake_case")]
pub enum Cell {
    Correct,
    Incorrect,
    Excluded { reason: String },
}

impl Cell {
    pub fn observed(&self) -> Option<bool> {
        match self {
            Cell::Correct => Some(true),
            Cell::Incorrect => Some(false),
            Cell::Excluded { .. } => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DataError {
    #[error("no records")]
    Empty,
    #[error("records span several tasks ({0}); fit one model per task")]
    MixedTasks(String),
    #[error("duplicate record for sample '{sample}' and approach '{approach}'")]
    Duplicate { sample: String, approach: String },
    #[error("approach '{0}' has no usable observation")]
    NoObservations(String),
    #[error("observation matrix shape mismatch: {0}")]
    Shape(String),
}

/// Samples × approaches grid of outcomes, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObservationMatrix {
    pub samples: Vec<String>,
    pub approaches: Vec<String>,
    cells: Vec<Cell>,
}

impl ObservationMatrix {
    pub fn new(samples: Vec<String>, approaches: Vec<String>, cells: Vec<Cell>) -> Result<Self, DataError> {
        if cells.len() != samples.len() * approaches.len() {
            return Err(DataError::Shape(format!(
                "{} cells for {} samples and {} approaches",
                cells.len(),
                samples.len(),
                approaches.len()
            )));
        }
        Ok(Self {
            samples,
            approaches,
            cells,
        })
    }

    /// Matrix from per-approach columns of `Some(correct)` or `None`
    /// (excluded).
    pub fn from_columns(approaches: Vec<String>, columns: &[Vec<Option<bool>>]) -> Result<Self, DataError> {
        let s = columns.first().map_or(0, Vec::len);
        if columns.len() != approaches.len() || columns.iter().any(|c| c.len() != s) {
            return Err(DataError::Shape("ragged columns".into()));
        }
        let mut cells = Vec::with_capacity(s * approaches.len());
        for i in 0..s {
            for col in columns {
                cells.push(match col[i] {
                    Some(true) => Cell::Correct,
                    Some(false) => Cell::Incorrect,
                    None => Cell::Excluded {
                        reason: "excluded".into(),
                    },
                });
            }
        }
        Self::new((0..s).map(|i| format!("s{i}")).collect(), approaches, cells)
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_approaches(&self) -> usize {
        self.approaches.len()
    }

    pub fn cell(&self, s: usize, a: usize) -> &Cell {
        &self.cells[s * self.approaches.len() + a]
    }

    pub fn column(&self, a: usize) -> impl Iterator<Item = &Cell> + '_ {
        (0..self.samples.len()).map(move |s| self.cell(s, a))
    }

    /// Correct and observed counts of one approach.
    pub fn counts(&self, a: usize) -> (usize, usize) {
        self.column(a).fold((0, 0), |(c, n), cell| match cell.observed() {
            Some(y) => (c + usize::from(y), n + 1),
            None => (c, n),
        })
    }

    /// Split off approaches without any observed cell. Returns the reduced
    /// matrix and the names of the dropped approaches.
    pub fn without_unobserved(&self) -> (ObservationMatrix, Vec<String>) {
        let (keep, dropped): (Vec<usize>, Vec<usize>) = (0..self.n_approaches()).partition(|&a| self.counts(a).1 > 0);
        let cells = (0..self.n_samples())
            .flat_map(|s| keep.iter().map(move |&a| self.cell(s, a).clone()))
            .collect();
        let m = ObservationMatrix {
            samples: self.samples.clone(),
            approaches: keep.iter().map(|&a| self.approaches[a].clone()).collect(),
            cells,
        };
        (m, dropped.into_iter().map(|a| self.approaches[a].clone()).collect())
    }

    /// Every approach needs at least one observed cell to be identified
    /// beyond its prior.
    pub fn check_fittable(&self) -> Result<(), DataError> {
        if self.samples.is_empty() || self.approaches.is_empty() {
            return Err(DataError::Empty);
        }
        for (a, name) in self.approaches.iter().enumerate() {
            if self.counts(a).1 == 0 {
                return Err(DataError::NoObservations(name.clone()));
            }
        }
        Ok(())
    }
}

/// Build the matrix of one task from its records. Samples and approaches keep
/// the order of first appearance; a (sample, approach) pair without a record
/// is excluded as missing.
pub fn build_dataset(records: &[ExperimentRecord], policy: ErrorPolicy) -> Result<ObservationMatrix, DataError> {
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    let tasks: BTreeSet<&str> = records.iter().map(|r| r.task_id.as_str()).collect();
    if tasks.len() > 1 {
        return Err(DataError::MixedTasks(tasks.into_iter().collect::<Vec<_>>().join(", ")));
    }

    let mut samples: Vec<String> = Vec::new();
    let mut approaches: Vec<String> = Vec::new();
    let index = |list: &mut Vec<String>, key: String| match list.iter().position(|x| *x == key) {
        Some(i) => i,
        None => {
            list.push(key);
            list.len() - 1
        }
    };
    let mut seen: HashMap<(usize, usize), &ExperimentRecord> = HashMap::new();
    for r in records {
        let s = index(&mut samples, r.sample_id.clone());
        let a = index(&mut approaches, r.variant.name());
        if seen.insert((s, a), r).is_some() {
            return Err(DataError::Duplicate {
                sample: r.sample_id.clone(),
                approach: r.variant.name(),
            });
        }
    }

    let mut cells = Vec::with_capacity(samples.len() * approaches.len());
    for s in 0..samples.len() {
        for a in 0..approaches.len() {
            cells.push(match seen.get(&(s, a)) {
                None => Cell::Excluded {
                    reason: "missing".into(),
                },
                Some(r) => match policy.observe(r.correct) {
                    Some(true) => Cell::Correct,
                    Some(false) => Cell::Incorrect,
                    None => Cell::Excluded {
                        reason: r
                            .outcome
                            .failure
                            .map(|f| f.to_string())
                            .unwrap_or_else(|| "excluded".into()),
                    },
                },
            });
        }
    }
    ObservationMatrix::new(samples, approaches, cells)
}
