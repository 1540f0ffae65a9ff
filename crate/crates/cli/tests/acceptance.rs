//! One line per acceptance criterion. Exits nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repomine::accounting::{cache_savings, cost, CostBreakdown, PriceBook};
use repomine::analysis::tool_usage;
use repomine::approach::{
    answered_outcome, failure_outcome, ApproachKind, ApproachRegistry, ApproachVariant, EventKind, Outcome,
    RunContext, ShellExecutor,
};
use repomine::gateway::{FailureKind, Gateway, MockBackend, MockScript, RetryPolicy, ScriptError, ScriptTurn, Usage};
use repomine::runner::{strip_volatile, Correctness, ExperimentRecord, Store, RECORD_SCHEMA};
use repomine::sandbox::ToolResult;
use repomine::shell::command_names;
use repomine::task::{ContextRecipe, ContextSource, Focus, RepoSpec, Sample, Task, Unit};
use repomine_bayes::{
    accuracy_summary, inv_logit, pairwise_diff, sample_posterior, simulate, AccuracyDraws, ModelSpec,
    ObservationMatrix, SamplerConfig, TrueParams, DEFAULT_ROPE,
};

type Check = Result<String, String>;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn repomine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repomine"))
        .args(args)
        .env_remove("REPOMINE_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> Result<String, String> {
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- AC1

fn baselines() -> Check {
    let tasks = fixtures().join("tasks/tasks.toml");
    let start = Instant::now();
    let out = ok(&repomine(&["baselines", "--json", "--tasks", tasks.to_str().unwrap()]))?;
    let elapsed = start.elapsed();
    let v: serde_json::Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    let expected = [
        ("herbold", 14.3, 37.3),
        ("hartel", 33.3, 36.3),
        ("levin", 25.0, 50.4),
        ("munaiah", 33.3, 52.9),
    ];
    let mut got = Vec::new();
    for (task, random, majority) in expected {
        let r = 100.0 * v[task]["random"].as_f64().ok_or(format!("{task} missing"))?;
        let m = 100.0 * v[task]["majority"].as_f64().ok_or(format!("{task} missing"))?;
        ensure(
            (r - random).abs() < 0.05 && (m - majority).abs() < 0.05,
            format!("{task}: {r:.2}/{m:.2}, want {random}/{majority}"),
        )?;
        got.push(format!("{task} {r:.1}/{m:.1}"));
    }
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("{} in {:?}", got.join(", "), elapsed))
}

// ---------------------------------------------------------------- AC2

fn calibration() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = dir.path().join("calibration.json");
    let start = Instant::now();
    let out = repomine(&["validate", "--cycles", "100", "--seed", "2024", "--out", report.to_str().unwrap()]);
    let elapsed = start.elapsed();
    let text = fs::read_to_string(&report).map_err(|e| format!("no report ({e}): {:?}", out))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let coverage: Vec<f64> = v["coverage"].as_array().unwrap().iter().map(|c| c.as_f64().unwrap()).collect();
    let converged = v["converged"].as_f64().unwrap();
    let detail = format!("coverage {coverage:?}, R-hat <= 1.01 on {:.0}% of fits, {elapsed:.0?}", 100.0 * converged);
    ensure(coverage.len() == 3, "three approaches")?;
    ensure(coverage.iter().all(|c| (0.88..=0.99).contains(c)), detail.clone())?;
    ensure(converged >= 0.95, detail.clone())?;
    ensure(elapsed < Duration::from_secs(600), detail.clone())?;
    ensure(out.status.success(), format!("validate exited {:?}", out.status.code()))?;
    Ok(detail)
}

// ---------------------------------------------------------------- AC3

/// Posterior-mean accuracy of one approach with `k` of `n` correct, by
/// integrating the difficulties per sample and then (alpha, sigma) on a grid.
fn grid_oracle(k: f64, n: f64, spec: &ModelSpec) -> f64 {
    let z: Vec<(f64, f64)> = (0..161)
        .map(|i| {
            let z = -8.0 + 0.1 * i as f64;
            (z, (-0.5 * z * z).exp())
        })
        .collect();
    let zsum: f64 = z.iter().map(|p| p.1).sum();
    let (mut logs, mut vals) = (Vec::new(), Vec::new());
    for i in 0..200 {
        let alpha = -3.0 + 8.0 * (i as f64 + 0.5) / 200.0;
        for j in 0..160 {
            let sigma = 6.0 * (j as f64 + 0.5) / 160.0;
            let (mut q, mut pp, mut pq) = (0.0, 0.0, 0.0);
            for &(z, w) in &z {
                let p = inv_logit(alpha + sigma * z);
                q += w * p;
                pp += w * p * p;
                pq += w * p * (1.0 - p);
            }
            let (q, pp, pq) = (q / zsum, pp / zsum, pq / zsum);
            logs.push(
                -0.5 * (alpha / spec.prior_alpha_sd).powi(2) - 0.5 * (sigma / spec.prior_sigma_scale).powi(2)
                    + k * q.ln()
                    + (n - k) * (1.0 - q).ln(),
            );
            vals.push((k * pp / q + (n - k) * pq / (1.0 - q)) / n);
        }
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    w.iter().zip(&vals).map(|(w, v)| w * v).sum::<f64>() / w.iter().sum::<f64>()
}

fn oracle() -> Check {
    let spec = ModelSpec::default();
    let col: Vec<Option<bool>> = (0..200).map(|i| Some(i < 150)).collect();
    let m = ObservationMatrix::from_columns(vec!["x".into()], &[col]).map_err(|e| e.to_string())?;
    let post = sample_posterior(&m, &spec, &SamplerConfig { seed: 3, ..SamplerConfig::default() })
        .map_err(|e| e.to_string())?;
    let mcmc = accuracy_summary(&AccuracyDraws::from_posterior(&post))[0].mean;
    let grid = grid_oracle(150.0, 200.0, &spec);
    let detail = format!("mcmc {mcmc:.4}, grid {grid:.4}");
    ensure((mcmc - 0.75).abs() <= 0.03 && (grid - 0.75).abs() <= 0.03, detail.clone())?;
    ensure((mcmc - grid).abs() <= 0.01, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- AC4

fn rope() -> Check {
    let col: Vec<Option<bool>> = (0..1000).map(|i| Some(i % 10 < 7)).collect();
    let same = ObservationMatrix::from_columns(vec!["a".into(), "b".into()], &[col.clone(), col])
        .map_err(|e| e.to_string())?;
    let post = sample_posterior(&same, &ModelSpec::default(), &SamplerConfig::default()).map_err(|e| e.to_string())?;
    let same_acc = AccuracyDraws::from_posterior(&post);
    let equiv = pairwise_diff(&same_acc, 0, 1, DEFAULT_ROPE).p_equiv;

    let sim = simulate(
        &TrueParams {
            alpha: vec![2.0, -2.0],
            sigma_theta: 1.0,
            samples: 300,
        },
        11,
    );
    let post = sample_posterior(&sim.observations, &ModelSpec::default(), &SamplerConfig::default())
        .map_err(|e| e.to_string())?;
    let gap_acc = AccuracyDraws::from_posterior(&post);
    let better = pairwise_diff(&gap_acc, 0, 1, DEFAULT_ROPE).p_better;

    let mut antisymmetric = true;
    for acc in [&same_acc, &gap_acc] {
        let ab = acc.diff_draws(0, 1);
        let ba = acc.diff_draws(1, 0);
        antisymmetric &= ab.iter().zip(&ba).all(|(x, y)| *x == -*y);
        let (f, r) = (pairwise_diff(acc, 0, 1, DEFAULT_ROPE), pairwise_diff(acc, 1, 0, DEFAULT_ROPE));
        antisymmetric &= f.n_better == r.n_worse && f.n_equiv == r.n_equiv && f.n_worse == r.n_better;
    }
    let detail = format!("identical p_equiv {equiv:.4}, 4-logit gap p_better {better:.4}, antisymmetry {antisymmetric}");
    ensure(equiv >= 0.95 && better > 0.99 && antisymmetric, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- AC5

/// Fails `false`, refuses `explode`, echoes everything else.
struct FakeShell;

impl ShellExecutor for FakeShell {
    fn execute(&mut self, command: &str) -> Result<ToolResult, String> {
        if command.contains("explode") {
            return Err("sandbox gone".into());
        }
        Ok(ToolResult {
            command: command.into(),
            exit_code: i32::from(command.contains("false")),
            stdout: format!("{command}\n"),
            stderr: String::new(),
            truncated: false,
            timed_out: false,
            wall_time_ms: 0,
        })
    }
}

fn levin() -> (Task, Sample) {
    let task = Task {
        id: "levin".into(),
        unit: Unit::Commit,
        question: "What is the maintenance intent of this commit?".into(),
        categories: vec!["corrective".into(), "adaptive".into(), "perfective".into()],
        allow_unclear: true,
        guidelines: "Pick the dominant purpose.".into(),
        recipe: ContextRecipe {
            simple: vec![ContextSource::CommitMessage],
            agent: vec![ContextSource::CommitMessage],
        },
    };
    let sample = Sample {
        id: "c1".into(),
        task_id: "levin".into(),
        repo: RepoSpec {
            name: "o/r".into(),
            fixture: "unused".into(),
            revision: None,
        },
        aux_files: BTreeMap::new(),
        artifacts: BTreeMap::from([(ContextSource::CommitMessage, "Fix crash".into())]),
        focus: Focus::Commit { commit: "abc".into() },
        ground_truth: "corrective".into(),
        repo_size_mb: 1.0,
    };
    (task, sample)
}

fn run_agent(script: MockScript, variant: &ApproachVariant, seed: u64) -> Result<(Outcome, repomine::approach::Trajectory), String> {
    let (task, sample) = levin();
    let gateway = Gateway::with_retry(Box::new(MockBackend::new(script)), RetryPolicy::immediate(2));
    let mut shell = FakeShell;
    let ctx = RunContext {
        task: &task,
        sample: &sample,
        gateway: &gateway,
        shell: Some(&mut shell),
        seed,
        cache_grid: Some(200),
    };
    ApproachRegistry::builtin()
        .for_variant(variant)
        .map_err(|e| e.to_string())?
        .run(variant, ctx)
        .map_err(|e| e.to_string())
}

const COMMANDS: [&str; 6] = ["ls", "cat README.md | head -3", "false", "git log && wc -l src/a.c", "explode", "grep -r x ."];

fn random_turn(rng: &mut ChaCha8Rng) -> ScriptTurn {
    let cmd = |rng: &mut ChaCha8Rng| COMMANDS[rng.random_range(0..COMMANDS.len())].to_string();
    match rng.random_range(0..13) {
        0..=2 => ScriptTurn::text(["ANSWER: corrective", "perfective", "ANSWER: banana", "I am not sure."][rng.random_range(0..4)]),
        3..=6 => ScriptTurn::text(format!("thinking\n<bash>{}</bash>\ntrailing", cmd(rng))),
        7..=10 => ScriptTurn {
            tool_calls: (0..rng.random_range(1..3)).map(|_| cmd(rng)).collect(),
            ..Default::default()
        },
        11 => ScriptTurn {
            error: Some(ScriptError::ContextOverflow),
            ..Default::default()
        },
        _ => ScriptTurn {
            error: Some(ScriptError::Provider),
            ..Default::default()
        },
    }
}

fn agent_loop() -> Check {
    let mut notes = Vec::new();
    for kind in [ApproachKind::AgentNative, ApproachKind::AgentStopSeq] {
        let turn = match kind {
            ApproachKind::AgentNative => ScriptTurn {
                tool_calls: vec!["ls".into()],
                ..Default::default()
            },
            _ => ScriptTurn::text("<bash>ls</bash>"),
        };
        let script = MockScript {
            context_window: None,
            caching: false,
            repeat_last: true,
            turns: vec![turn],
        };
        let (o, t) = run_agent(script, &ApproachVariant::new(kind, "m"), 1)?;
        ensure(
            o.failure == Some(FailureKind::StepLimit) && o.steps_used == 50 && t.validate().is_ok(),
            format!("{kind}: {:?} after {} steps", o.failure, o.steps_used),
        )?;
        notes.push(format!("{kind} stops at {}", o.steps_used));
    }

    let script = MockScript {
        context_window: None,
        caching: false,
        repeat_last: false,
        turns: vec![
            ScriptTurn {
                tool_calls: vec!["false".into()],
                ..Default::default()
            },
            ScriptTurn {
                tool_calls: vec!["explode".into()],
                ..Default::default()
            },
            ScriptTurn::text("ANSWER: corrective"),
        ],
    };
    let (o, t) = run_agent(script, &ApproachVariant::new(ApproachKind::AgentNative, "m"), 2)?;
    ensure(
        o.predicted.as_deref() == Some("corrective") && o.tool_errors == 2 && t.validate().is_ok(),
        format!("tool-error script: {o:?}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..1000 {
        let script = MockScript {
            context_window: rng.random_bool(0.5).then(|| rng.random_range(200..3000)),
            caching: false,
            repeat_last: rng.random_bool(0.5),
            turns: (0..rng.random_range(0..10)).map(|_| random_turn(&mut rng)).collect(),
        };
        let kind = if rng.random_bool(0.5) {
            ApproachKind::AgentNative
        } else {
            ApproachKind::AgentStopSeq
        };
        let limit = rng.random_range(1..8);
        let (o, t) = run_agent(script, &ApproachVariant::new(kind, "m").with_step_limit(limit), rng.random())?;
        let calls = t.of_kind(EventKind::ToolCall).count() as u32;
        let outputs = t.of_kind(EventKind::ToolOutput).count() as u32;
        let last_final = t.events.last().map(|e| e.kind) == Some(EventKind::FinalAnswer);
        let good = t.validate().is_ok()
            && o.predicted.is_some() != o.failure.is_some()
            && calls == o.steps_used
            && outputs == o.steps_used
            && (o.failure == Some(FailureKind::StepLimit)) == (o.steps_used == limit)
            && o.command_count >= o.steps_used
            && last_final == o.predicted.is_some();
        ensure(good, format!("random script {case} broke the trajectory invariant: {o:?}"))?;
    }
    notes.push("tool errors recover".into());
    notes.push("1000 random scripts well formed".into());
    Ok(notes.join(", "))
}

// ---------------------------------------------------------------- AC6

fn accounting() -> Check {
    let book = PriceBook::default();
    let sheet = book.get("claude-3.7-sonnet").map_err(|e| e.to_string())?;
    let million = cost(
        &Usage {
            input_tokens: 1_000_000,
            ..Usage::default()
        },
        sheet,
    )
    .map_err(|e| e.to_string())?
    .total;
    let worked = Usage {
        input_tokens: 10_000,
        output_tokens: 1_000,
        cache_read_tokens: 20_000,
        cache_write_tokens: 5_000,
    };
    let total = cost(&worked, sheet).map_err(|e| e.to_string())?.total;
    let savings = cache_savings(&worked, sheet).map_err(|e| e.to_string())?;
    let detail = format!("1M input {million:.2}, worked {total:.5}, savings {savings:.3}");
    ensure(million == 3.0, detail.clone())?;
    ensure((total - 0.06975).abs() < 1e-12, detail.clone())?;
    ensure(format!("{savings:.3}") == "0.419", detail.clone())?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let usage = |rng: &mut ChaCha8Rng| Usage {
        input_tokens: rng.random_range(0..2_000_000),
        output_tokens: rng.random_range(0..200_000),
        cache_read_tokens: rng.random_range(0..2_000_000),
        cache_write_tokens: rng.random_range(0..500_000),
    };
    for _ in 0..1000 {
        let (a, b) = (usage(&mut rng), usage(&mut rng));
        let ca = cost(&a, sheet).unwrap().total;
        let cb = cost(&b, sheet).unwrap().total;
        let cab = cost(&(a + b), sheet).unwrap().total;
        ensure((cab - ca - cb).abs() <= 1e-9 * cab.max(1.0), format!("additivity broke for {a:?} + {b:?}"))?;
        let k = rng.random_range(0..50u64);
        let scaled = Usage {
            input_tokens: a.input_tokens * k,
            output_tokens: a.output_tokens * k,
            cache_read_tokens: a.cache_read_tokens * k,
            cache_write_tokens: a.cache_write_tokens * k,
        };
        let cs = cost(&scaled, sheet).unwrap().total;
        ensure((cs - k as f64 * ca).abs() <= 1e-9 * cs.max(1.0), format!("scaling broke for {a:?} x {k}"))?;
    }
    Ok(detail + ", linear over 1000 random usages")
}

// ---------------------------------------------------------------- AC7

fn demo_run(store: &Path) -> Result<(), String> {
    let tasks = fixtures().join("demo/tasks.toml");
    let prices = fixtures().join("prices.toml");
    ok(&repomine(&[
        "run",
        "--tasks",
        tasks.to_str().unwrap(),
        "--prices",
        prices.to_str().unwrap(),
        "--store",
        store.to_str().unwrap(),
        "--seed",
        "42",
        "--workers",
        "2",
        "--cache-grid",
        "256",
    ]))
    .map(drop)
}

fn tool_parsing() -> Check {
    let names = command_names("cat pr.json | grep title | head -1");
    let mut t = repomine::approach::Trajectory::default();
    t.push(EventKind::Prompt, "p");
    t.push(EventKind::ToolCall, "cat pr.json | grep title | head -1");
    t.push(EventKind::ToolOutput, "o");
    let stats = tool_usage([&t]);
    ensure(names == ["cat", "grep", "head"], format!("names {names:?}"))?;
    ensure(stats.pipe_count == 2 && stats.counts.len() == 3, format!("{stats:?}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    demo_run(dir.path())?;
    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    let records = store.records().map_err(|e| e.to_string())?;
    let mut agent = 0;
    let mut trajectories = Vec::new();
    for r in records.iter().filter(|r| r.variant.kind.is_agent()) {
        agent += 1;
        ensure(
            r.outcome.command_count >= r.outcome.steps_used,
            format!("{}: {} commands < {} steps", r.key(), r.outcome.command_count, r.outcome.steps_used),
        )?;
        trajectories.push(store.read_trajectory(&r.trajectory_ref).map_err(|e| e.to_string())?);
    }
    let all = tool_usage(&trajectories);
    ensure(all.total_commands >= all.total_steps, format!("{all:?}"))?;
    Ok(format!(
        "{{cat, grep, head}} with 2 pipes; {agent} agent records, {} commands over {} steps",
        all.total_commands, all.total_steps
    ))
}

// ---------------------------------------------------------------- AC8

fn record(sample: usize, variant: &ApproachVariant, outcome: Outcome) -> ExperimentRecord {
    let sample_id = format!("s{sample:03}");
    let correct = Correctness::of(&outcome, "yes");
    ExperimentRecord {
        schema: RECORD_SCHEMA.into(),
        experiment_id: format!("t--{sample_id}--{}", variant.name()),
        task_id: "t".into(),
        sample_id,
        variant: variant.clone(),
        seed: 0,
        ground_truth: "yes".into(),
        outcome,
        correct,
        cost: CostBreakdown::default(),
        trajectory_ref: String::new(),
        started_at: String::new(),
        finished_at: String::new(),
    }
}

fn error_policy() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    let variants = [
        ApproachVariant::new(ApproachKind::SimpleCot, "strong"),
        ApproachVariant::new(ApproachKind::SimpleCot, "overflowing"),
        ApproachVariant::new(ApproachKind::SimpleCot, "weak"),
    ];
    let rates = [0.8, 0.65, 0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in 0..80 {
        for (v, rate) in variants.iter().zip(rates) {
            let label = if rng.random_bool(rate) { "yes" } else { "no" };
            let outcome = if v.model_id == "overflowing" && s % 4 == 1 {
                failure_outcome(FailureKind::ContextOverflow, "prompt exceeds the context window")
            } else {
                answered_outcome(label.into())
            };
            store.append(&record(s, v, outcome)).map_err(|e| e.to_string())?;
        }
    }
    ok(&repomine(&["eval", "--store", dir.path().to_str().unwrap(), "--seed", "4"]))?;
    let text = fs::read_to_string(dir.path().join("eval/accuracy.csv")).map_err(|e| e.to_string())?;
    let mut means = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        means.insert((f[1].to_string(), f[2].to_string()), f[6].parse::<f64>().map_err(|e| e.to_string())?);
    }
    let name = variants[1].name();
    let exclude = means[&("exclude".to_string(), name.clone())];
    let fail = means[&("fail".to_string(), name)];
    let detail = format!("20 of 80 overflowed: exclude {exclude:.4}, fail {fail:.4}");
    ensure(fail <= exclude, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- AC9

/// Every file below `root`, with wall-clock fields removed from JSON and
/// timing tables left out.
fn snapshot(root: &Path) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            if rel.ends_with("timing.csv") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
            let normalized = if rel.ends_with(".jsonl") {
                text.lines()
                    .map(|l| {
                        let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                        strip_volatile(&mut v);
                        v.to_string()
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            } else if rel.ends_with(".json") {
                let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{rel}: {e}"))?;
                strip_volatile(&mut v);
                v.to_string()
            } else {
                text
            };
            out.insert(rel, normalized);
        }
    }
    Ok(out)
}

fn pipeline(store: &Path) -> Result<(), String> {
    demo_run(store)?;
    let prices = fixtures().join("prices.toml");
    let s = store.to_str().unwrap();
    ok(&repomine(&["report", "--store", s, "--prices", prices.to_str().unwrap()]))?;
    ok(&repomine(&["eval", "--store", s, "--seed", "7", "--export-draws"]))?;
    Ok(())
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let (sa, sb) = (snapshot(a.path())?, snapshot(b.path())?);
    ensure(
        sa.keys().eq(sb.keys()),
        format!("different file sets: {} vs {}", sa.len(), sb.len()),
    )?;
    let differing: Vec<&String> = sa.iter().filter(|(k, v)| sb[*k] != **v).map(|(k, _)| k).collect();
    ensure(differing.is_empty(), format!("differing files: {differing:?}"))?;
    Ok(format!("{} files identical across two run/report/eval executions", sa.len()))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, &str, fn() -> Check); 9] = [
        ("AC1", "baseline reproduction", baselines),
        ("AC2", "model calibration", calibration),
        ("AC3", "posterior-predictive oracle", oracle),
        ("AC4", "ROPE mechanics", rope),
        ("AC5", "agent-loop mechanics", agent_loop),
        ("AC6", "accounting", accounting),
        ("AC7", "tool-usage parsing", tool_parsing),
        ("AC8", "error-policy duality", error_policy),
        ("AC9", "determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC")).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", p.downcast_ref::<String>().cloned().unwrap_or_default())));
        let elapsed = start.elapsed();
        match result {
            Ok(detail) => println!("PASS {id} {name}: {detail} [{elapsed:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name}: {detail} [{elapsed:.1?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
