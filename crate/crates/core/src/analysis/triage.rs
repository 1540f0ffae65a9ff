use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::disagreement::{is_eligible, DisagreementCase};
use crate::approach::EventKind;
use crate::runner::{ExperimentRecord, Store};

/// Characters of model reasoning shown per variant.
const EXCERPT_CHARS: usize = 600;
/// Commands shown per variant.
const EXCERPT_COMMANDS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The ground truth label is wrong.
    UpdateLabel,
    /// The ground truth label stands; the models are wrong.
    KeepLabel,
    /// The task description is ambiguous for this sample.
    Specification,
    Unresolvable,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [
        Verdict::UpdateLabel,
        Verdict::KeepLabel,
        Verdict::Specification,
        Verdict::Unresolvable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::UpdateLabel => "update_label",
            Verdict::KeepLabel => "keep_label",
            Verdict::Specification => "specification",
            Verdict::Unresolvable => "unresolvable",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = TriageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| TriageError::InvalidVerdict(s.trim().to_string()))
    }
}

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("invalid verdict '{0}' (expected update_label, keep_label, specification or unresolvable)")]
    InvalidVerdict(String),
    #[error("diagnosis store {path}: {message}")]
    Store { path: String, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub task_id: String,
    pub sample_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
    pub annotator: String,
    pub recorded_at: String,
}

/// Append-only JSONL file of diagnoses. A later entry for the same case and
/// annotator supersedes earlier ones.
pub struct DiagnosisStore {
    path: PathBuf,
}

impl DiagnosisStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn err(&self, message: impl Into<String>) -> TriageError {
        TriageError::Store {
            path: self.path.display().to_string(),
            message: message.into(),
        }
    }

    pub fn append(&self, d: &Diagnosis) -> Result<(), TriageError> {
        if let Some(parent) = self.path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut line = serde_json::to_string(d).map_err(|e| self.err(e.to_string()))?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(line.as_bytes())?;
        Ok(())
    }

    /// Every stored entry, in file order.
    pub fn load(&self) -> Result<Vec<Diagnosis>, TriageError> {
        if !self.path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&self.path)?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| self.err(format!("line {}: {e}", i + 1))))
            .collect()
    }

    /// The effective diagnoses: the last entry per (task, sample, annotator),
    /// ordered by that key.
    pub fn latest(&self) -> Result<Vec<Diagnosis>, TriageError> {
        let mut map: BTreeMap<(String, String, String), Diagnosis> = BTreeMap::new();
        for d in self.load()? {
            map.insert((d.task_id.clone(), d.sample_id.clone(), d.annotator.clone()), d);
        }
        Ok(map.into_values().collect())
    }
}

/// Verdict counts per task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VerdictSummary {
    pub counts: BTreeMap<String, BTreeMap<Verdict, usize>>,
}

impl VerdictSummary {
    pub fn total(&self) -> usize {
        self.counts.values().flat_map(|m| m.values()).sum()
    }

    pub fn verdict_total(&self, v: Verdict) -> usize {
        self.counts.values().filter_map(|m| m.get(&v)).sum()
    }
}

pub fn verdict_summary(diagnoses: &[Diagnosis]) -> VerdictSummary {
    let mut s = VerdictSummary::default();
    for d in diagnoses {
        *s.counts
            .entry(d.task_id.clone())
            .or_default()
            .entry(d.verdict)
            .or_default() += 1;
    }
    s
}

fn tail(text: &str, n: usize) -> &str {
    let count = text.chars().count();
    if count <= n {
        return text;
    }
    let start = text.char_indices().nth(count - n).map(|(i, _)| i).unwrap_or(0);
    &text[start..]
}

fn show_case<W: Write>(
    out: &mut W,
    position: usize,
    total: usize,
    case: &DisagreementCase,
    records: &[&ExperimentRecord],
    store: &Store,
) -> io::Result<()> {
    writeln!(out, "=== case {}/{}: {} ===", position, total, case.key())?;
    writeln!(out, "ground truth: {}", case.ground_truth)?;
    for (variant, pred) in &case.predictions {
        writeln!(out, "  {variant}: {}", pred.as_deref().unwrap_or("(failed)"))?;
    }
    for r in records.iter().filter(|r| is_eligible(&r.variant)) {
        if r.outcome.predicted.as_deref() == Some(r.ground_truth.as_str()) {
            continue;
        }
        writeln!(out, "--- {} ---", r.variant.name())?;
        let Ok(t) = store.read_trajectory(&r.trajectory_ref) else {
            writeln!(out, "(trajectory unavailable)")?;
            continue;
        };
        for c in t.commands().take(EXCERPT_COMMANDS) {
            writeln!(out, "$ {}", c.lines().next().unwrap_or(""))?;
        }
        if let Some(g) = t.of_kind(EventKind::Generation).last() {
            writeln!(out, "{}", tail(g.payload.trim(), EXCERPT_CHARS))?;
        }
    }
    Ok(())
}

/// Walk the cases not yet diagnosed by `annotator`, asking for a verdict and
/// a note for each. `skip` moves on, `quit` (or end of input) stops. Returns
/// the number of diagnoses recorded in this session.
pub fn run_triage<R: BufRead, W: Write>(
    cases: &[DisagreementCase],
    records: &[ExperimentRecord],
    store: &Store,
    diagnoses: &DiagnosisStore,
    annotator: &str,
    mut input: R,
    mut output: W,
) -> Result<usize, TriageError> {
    let done: Vec<(String, String)> = diagnoses
        .latest()?
        .into_iter()
        .filter(|d| d.annotator == annotator)
        .map(|d| (d.task_id, d.sample_id))
        .collect();
    let pending: Vec<&DisagreementCase> = cases
        .iter()
        .filter(|c| !done.contains(&(c.task_id.clone(), c.sample_id.clone())))
        .collect();
    let mut recorded = 0;
    let mut line = String::new();
    'cases: for (i, case) in pending.iter().enumerate() {
        let rs: Vec<&ExperimentRecord> = records
            .iter()
            .filter(|r| r.task_id == case.task_id && r.sample_id == case.sample_id)
            .collect();
        show_case(&mut output, i + 1, pending.len(), case, &rs, store)?;
        let verdict = loop {
            write!(output, "verdict [update_label|keep_label|specification|unresolvable|skip|quit]: ")?;
            output.flush()?;
            line.clear();
            if input.read_line(&mut line)? == 0 {
                break 'cases;
            }
            match line.trim() {
                "quit" => break 'cases,
                "skip" => continue 'cases,
                s => match s.parse::<Verdict>() {
                    Ok(v) => break v,
                    Err(e) => writeln!(output, "{e}")?,
                },
            }
        };
        write!(output, "note: ")?;
        output.flush()?;
        line.clear();
        input.read_line(&mut line)?;
        diagnoses.append(&Diagnosis {
            task_id: case.task_id.clone(),
            sample_id: case.sample_id.clone(),
            verdict,
            note: line.trim().to_string(),
            annotator: annotator.to_string(),
            recorded_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        })?;
        recorded += 1;
    }
    Ok(recorded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(task: &str, sample: &str) -> DisagreementCase {
        DisagreementCase {
            task_id: task.into(),
            sample_id: sample.into(),
            ground_truth: "yes".into(),
            predictions: BTreeMap::new(),
            disagree_count: 2,
        }
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!("keep_label".parse::<Verdict>().unwrap(), Verdict::KeepLabel);
        assert!(matches!("maybe".parse::<Verdict>(), Err(TriageError::InvalidVerdict(_))));
    }

    #[test]
    fn interactive_session_records_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("store")).unwrap();
        let diag = DiagnosisStore::new(dir.path().join("diag.jsonl"));
        let cases = [case("t1", "a"), case("t1", "b"), case("t2", "c")];
        let input = "maybe\nkeep_label\nlooks right\nskip\nupdate_label\nmislabeled\n";
        let mut out = Vec::new();
        let n = run_triage(&cases, &[], &store, &diag, "ann", input.as_bytes(), &mut out).unwrap();
        assert_eq!(n, 2);
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("invalid verdict 'maybe'"));
        let latest = diag.latest().unwrap();
        assert_eq!(latest.len(), 2);
        assert_eq!(latest[0].verdict, Verdict::KeepLabel);
        assert_eq!(latest[1].note, "mislabeled");

        // Only the skipped case remains; end of input stops cleanly.
        let mut out = Vec::new();
        let n = run_triage(&cases, &[], &store, &diag, "ann", "".as_bytes(), &mut out).unwrap();
        assert_eq!(n, 0);
        assert!(String::from_utf8(out).unwrap().contains("case 1/1: t1/b"));
    }

    #[test]
    fn later_entry_wins_and_summary_totals_match() {
        let dir = tempfile::tempdir().unwrap();
        let diag = DiagnosisStore::new(dir.path().join("d.jsonl"));
        let mk = |s: &str, v, a: &str| Diagnosis {
            task_id: "t".into(),
            sample_id: s.into(),
            verdict: v,
            note: String::new(),
            annotator: a.into(),
            recorded_at: String::new(),
        };
        diag.append(&mk("a", Verdict::KeepLabel, "x")).unwrap();
        diag.append(&mk("a", Verdict::UpdateLabel, "x")).unwrap();
        diag.append(&mk("a", Verdict::KeepLabel, "y")).unwrap();
        let latest = diag.latest().unwrap();
        assert_eq!(latest.len(), 2);
        let s = verdict_summary(&latest);
        assert_eq!(s.total(), latest.len());
        assert_eq!(s.verdict_total(Verdict::UpdateLabel), 1);
    }
}
