use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use repomine::accounting::PriceBook;
use repomine::analysis::{
    find_disagreements, resource_report, run_triage, steps_per_task, stratified_sample, tool_usage,
    unclear_confusion, verdict_summary, DiagnosisStore, Verdict,
};
use repomine::approach::{ApproachRegistry, ApproachVariant, Trajectory};
use repomine::gateway::BackendRegistry;
use repomine::runner::{plan, sub_seed, ErrorPolicy, ExperimentRecord, Filters, Runner, RunnerConfig, Store};
use repomine::sandbox::IsolationRegistry;
use repomine::task::{baseline_rates, TaskSet};
use repomine_bayes::{
    accuracy_summary, all_pairs, build_dataset, calibrate, sample_posterior, write_posterior_csv, AccuracyDraws,
    CalibrationConfig, ModelSpec, SamplerConfig,
};

use crate::config::Settings;
use crate::error::{Category, CliError};
use crate::table::{num, pct, Table};

fn load_tasks(s: &Settings) -> Result<TaskSet, CliError> {
    TaskSet::load(&s.tasks).map_err(|e| CliError::config(format!("{}: {e}", s.tasks.display())))
}

fn load_prices(s: &Settings) -> Result<PriceBook, CliError> {
    match &s.prices {
        Some(p) => PriceBook::load(p).map_err(|e| CliError::config(format!("{}: {e}", p.display()))),
        None => Ok(PriceBook::default()),
    }
}

fn open_store(s: &Settings) -> Result<Store, CliError> {
    Ok(Store::open(&s.store)?)
}

fn load_records(store: &Store) -> Result<Vec<ExperimentRecord>, CliError> {
    let records = store.records()?;
    if records.is_empty() {
        return Err(CliError::config(format!("no records in {}", store.root().display())));
    }
    Ok(records)
}

pub fn baselines(s: &Settings, json: bool) -> Result<(), CliError> {
    let tasks = load_tasks(s)?;
    let mut t = Table::new(vec!["task", "k", "n", "random", "majority", "majority_label", "majority_count"]);
    let mut all = BTreeMap::new();
    for task in tasks.tasks() {
        let b = baseline_rates(task, tasks.samples_of(&task.id)).map_err(CliError::config)?;
        t.push(vec![
            task.id.clone(),
            b.k.to_string(),
            b.n.to_string(),
            pct(b.random),
            pct(b.majority),
            b.majority_label.clone(),
            b.majority_count.to_string(),
        ]);
        all.insert(task.id.clone(), b);
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&all).map_err(|e| CliError::new(Category::Internal, e))?);
    } else {
        print!("{}", t.render());
    }
    Ok(())
}

pub struct RunOptions {
    pub variants: Vec<String>,
    pub limit: Option<usize>,
    pub max_repo_mb: f64,
    pub cache_grid: u64,
    pub dry_run: bool,
}

pub fn run(s: &Settings, opts: &RunOptions) -> Result<(), CliError> {
    let seed = s.require_seed("run")?;
    let tasks = load_tasks(s)?;
    let prices = load_prices(s)?;
    let variants = if opts.variants.is_empty() {
        ApproachVariant::default_set()
    } else {
        opts.variants
            .iter()
            .map(|v| ApproachVariant::parse(v).map_err(CliError::usage))
            .collect::<Result<_, _>>()?
    };
    let mut p = plan(
        &tasks,
        &variants,
        &Filters {
            max_repo_size_mb: opts.max_repo_mb,
        },
        seed,
    );
    if let Some(n) = opts.limit {
        p.entries.truncate(n);
    }
    let backends = BackendRegistry::builtin(&s.mock_dir);
    let approaches = ApproachRegistry::builtin();
    let isolation = IsolationRegistry::builtin()
        .create(&s.isolation)
        .map_err(CliError::config)?;
    let runner = Runner {
        tasks: &tasks,
        prices: &prices,
        backends: &backends,
        approaches: &approaches,
        isolation,
        config: RunnerConfig {
            backend: s.backend.clone(),
            workers: s.workers,
            cache_grid: opts.cache_grid.max(1),
            ..RunnerConfig::default()
        },
    };
    runner.check(&p)?;
    let store = open_store(s)?;
    let plan_json = serde_json::to_string_pretty(&p).map_err(|e| CliError::new(Category::Internal, e))?;
    fs::write(store.root().join("plan.json"), plan_json + "\n")?;
    if opts.dry_run {
        println!("{} experiments planned, {} samples excluded", p.entries.len(), p.excluded.len());
        return Ok(());
    }
    let summary = runner.execute_plan(&p, &store)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::new(Category::Internal, e))?
    );
    Ok(())
}

pub fn report(s: &Settings, out: Option<PathBuf>) -> Result<(), CliError> {
    let store = open_store(s)?;
    let records = load_records(&store)?;
    let prices = load_prices(s)?;
    let out = out.unwrap_or_else(|| store.root().join("report"));

    let rows = resource_report(&records, &prices).map_err(CliError::config)?;
    let mut res = Table::new(vec![
        "variant",
        "experiments",
        "counted",
        "mean_input_tokens",
        "mean_output_tokens",
        "mean_cache_read_tokens",
        "mean_cache_write_tokens",
        "mean_cost",
        "total_cost",
        "cache_savings",
    ]);
    let mut timing = Table::new(vec!["variant", "mean_wall_time_ms"]);
    let mut errors = Table::new(vec!["variant", "failure", "count"]);
    for r in &rows {
        res.push(vec![
            r.variant.clone(),
            r.experiments.to_string(),
            r.counted.to_string(),
            num(r.mean_input_tokens),
            num(r.mean_output_tokens),
            num(r.mean_cache_read_tokens),
            num(r.mean_cache_write_tokens),
            num(r.mean_cost),
            num(r.total_cost),
            r.cache_savings.map(num).unwrap_or_default(),
        ]);
        timing.push(vec![r.variant.clone(), num(r.mean_wall_time_ms)]);
        for (kind, n) in &r.errors {
            errors.push(vec![r.variant.clone(), kind.to_string(), n.to_string()]);
        }
    }

    let mut by_variant: Vec<(String, Vec<Trajectory>)> = Vec::new();
    for r in records.iter().filter(|r| r.variant.kind.is_agent()) {
        let t = match store.read_trajectory(&r.trajectory_ref) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("skipping {}: {e}", r.key());
                continue;
            }
        };
        let name = r.variant.name();
        match by_variant.iter_mut().find(|(n, _)| *n == name) {
            Some((_, ts)) => ts.push(t),
            None => by_variant.push((name, vec![t])),
        }
    }
    let mut tools = Table::new(vec!["variant", "command", "count"]);
    let mut composition = Table::new(vec![
        "variant",
        "experiments",
        "steps",
        "commands",
        "pipes",
        "chains",
        "steps_per_experiment",
        "commands_per_experiment",
    ]);
    for (variant, ts) in &by_variant {
        let st = tool_usage(ts);
        for (cmd, n) in st.top(usize::MAX) {
            tools.push(vec![variant.clone(), cmd.to_string(), n.to_string()]);
        }
        composition.push(vec![
            variant.clone(),
            st.experiments.to_string(),
            st.total_steps.to_string(),
            st.total_commands.to_string(),
            st.pipe_count.to_string(),
            st.chain_count.to_string(),
            num(st.steps_per_experiment),
            num(st.commands_per_experiment),
        ]);
    }

    let mut steps = Table::new(vec!["task", "variant", "experiments", "mean_steps", "mean_commands", "step_limit_hits"]);
    for r in steps_per_task(&records) {
        steps.push(vec![
            r.task_id,
            r.variant,
            r.experiments.to_string(),
            num(r.mean_steps),
            num(r.mean_commands),
            r.step_limit_hits.to_string(),
        ]);
    }
    let mut confusion = Table::new(vec!["variant", "clear_clear", "clear_unclear", "unclear_clear", "unclear_unclear"]);
    for c in unclear_confusion(&records) {
        confusion.push(vec![
            c.variant,
            c.clear_clear.to_string(),
            c.clear_unclear.to_string(),
            c.unclear_clear.to_string(),
            c.unclear_unclear.to_string(),
        ]);
    }

    let tables = [
        ("resources", &res),
        ("errors", &errors),
        ("tools", &tools),
        ("composition", &composition),
        ("steps", &steps),
        ("confusion", &confusion),
        ("timing", &timing),
    ];
    for (name, t) in tables {
        t.write_csv(&out.join(format!("{name}.csv")))?;
    }
    for (name, t) in &tables[..2] {
        println!("# {name}\n{}", t.render());
    }
    println!("# composition\n{}", composition.render());
    println!("reports written to {}", out.display());
    Ok(())
}

pub struct EvalOptions {
    pub out: Option<PathBuf>,
    pub task: Option<String>,
    pub sampler: SamplerConfig,
    pub export_draws: bool,
}

pub fn eval(s: &Settings, opts: &EvalOptions) -> Result<(), CliError> {
    let store = open_store(s)?;
    let records = load_records(&store)?;
    let out = opts.out.clone().unwrap_or_else(|| store.root().join("eval"));
    let seed = s.seed.unwrap_or(0);
    let policies: Vec<ErrorPolicy> = match s.error_policy {
        Some(p) => vec![p],
        None => ErrorPolicy::BOTH.to_vec(),
    };
    let mut tasks: Vec<(&str, Vec<ExperimentRecord>)> = Vec::new();
    for r in &records {
        if opts.task.as_deref().is_some_and(|t| t != r.task_id) {
            continue;
        }
        match tasks.iter_mut().find(|(t, _)| *t == r.task_id) {
            Some((_, rs)) => rs.push(r.clone()),
            None => tasks.push((&r.task_id, vec![r.clone()])),
        }
    }
    if tasks.is_empty() {
        return Err(CliError::config("no records for the selected task"));
    }

    let spec = ModelSpec::default();
    let mut accuracy = Table::new(vec![
        "task", "policy", "approach", "correct", "observed", "excluded", "mean", "lower", "upper",
    ]);
    let mut pairwise = Table::new(vec![
        "task", "policy", "a", "b", "rope", "mean", "lower", "upper", "p_worse", "p_equiv", "p_better",
    ]);
    let mut diagnostics = Table::new(vec!["task", "policy", "parameter", "rhat", "ess", "gated"]);
    let mut unconverged = Vec::new();
    for (task, rs) in &tasks {
        for &policy in &policies {
            let m = build_dataset(rs, policy).map_err(CliError::model)?;
            let (fit_m, dropped) = m.without_unobserved();
            for name in &dropped {
                log::warn!("{task} ({policy}): {name} has no observed outcome and is left out of the fit");
                accuracy.push(vec![
                    task.to_string(),
                    policy.to_string(),
                    name.clone(),
                    "0".into(),
                    "0".into(),
                    m.n_samples().to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]);
            }
            if fit_m.n_approaches() == 0 {
                continue;
            }
            let cfg = SamplerConfig {
                seed: sub_seed(seed, &format!("{task}/{policy}")),
                ..opts.sampler
            };
            let post = sample_posterior(&fit_m, &spec, &cfg).map_err(CliError::model)?;
            let acc = AccuracyDraws::from_posterior(&post);
            for (a, row) in accuracy_summary(&acc).into_iter().enumerate() {
                let (c, n) = fit_m.counts(a);
                accuracy.push(vec![
                    task.to_string(),
                    policy.to_string(),
                    row.approach,
                    c.to_string(),
                    n.to_string(),
                    (fit_m.n_samples() - n).to_string(),
                    num(row.mean),
                    num(row.lower),
                    num(row.upper),
                ]);
            }
            for d in all_pairs(&acc, s.rope) {
                pairwise.push(vec![
                    task.to_string(),
                    policy.to_string(),
                    d.a,
                    d.b,
                    num(d.rope),
                    num(d.mean),
                    num(d.lower),
                    num(d.upper),
                    num(d.p_worse),
                    num(d.p_equiv),
                    num(d.p_better),
                ]);
            }
            for p in &post.diagnostics.params {
                diagnostics.push(vec![
                    task.to_string(),
                    policy.to_string(),
                    p.name.clone(),
                    num(p.rhat),
                    format!("{:.1}", p.ess),
                    p.gated.to_string(),
                ]);
            }
            if let Some(w) = post.diagnostics.worst() {
                if !(w.rhat <= cfg.rhat_threshold) {
                    unconverged.push(format!("{task} ({policy}): R-hat of {} is {:.4}", w.name, w.rhat));
                }
            }
            if opts.export_draws {
                let path = out.join("draws").join(format!("{task}.{policy}.csv"));
                fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
                write_posterior_csv(&post, BufWriter::new(File::create(&path)?)).map_err(CliError::model)?;
            }
        }
    }
    accuracy.write_csv(&out.join("accuracy.csv"))?;
    pairwise.write_csv(&out.join("pairwise.csv"))?;
    diagnostics.write_csv(&out.join("diagnostics.csv"))?;
    println!("{}", accuracy.render());
    println!("results written to {}", out.display());
    if !unconverged.is_empty() {
        return Err(CliError::model(format!(
            "sampler did not converge (threshold {}): {}",
            opts.sampler.rhat_threshold,
            unconverged.join("; ")
        )));
    }
    Ok(())
}

pub struct TriageOptions {
    pub diagnoses: Option<PathBuf>,
    pub annotator: Option<String>,
    pub sample_size: usize,
    pub min_disagree: usize,
    pub summary: bool,
}

pub fn triage(s: &Settings, opts: &TriageOptions) -> Result<(), CliError> {
    let store = open_store(s)?;
    let diag = DiagnosisStore::new(
        opts.diagnoses
            .clone()
            .unwrap_or_else(|| store.root().join("diagnoses.jsonl")),
    );
    if opts.summary {
        let summary = verdict_summary(&diag.latest().map_err(CliError::config)?);
        let mut t = Table::new(vec!["task", "update_label", "keep_label", "specification", "unresolvable", "total"]);
        for (task, counts) in &summary.counts {
            let mut row = vec![task.clone()];
            row.extend(Verdict::ALL.iter().map(|v| counts.get(v).copied().unwrap_or(0).to_string()));
            row.push(counts.values().sum::<usize>().to_string());
            t.push(row);
        }
        print!("{}", t.render());
        return Ok(());
    }
    let seed = s.require_seed("triage")?;
    let annotator = opts
        .annotator
        .clone()
        .ok_or_else(|| CliError::usage("triage needs --annotator"))?;
    let records = load_records(&store)?;
    let cases = find_disagreements(&records, opts.min_disagree);
    let sample = stratified_sample(&cases, opts.sample_size, seed);
    eprintln!("{} disagreement cases, {} sampled", cases.len(), sample.len());
    let stdin = io::stdin();
    let n = run_triage(&sample, &records, &store, &diag, &annotator, stdin.lock(), io::stdout().lock())
        .map_err(CliError::config)?;
    eprintln!("{n} diagnoses recorded in {}", diag.path().display());
    Ok(())
}

pub struct ValidateOptions {
    pub cycles: usize,
    pub samples: usize,
    pub approaches: usize,
    pub out: Option<PathBuf>,
    pub sampler: SamplerConfig,
}

/// Coverage band and convergence share a calibrated sampler must reach.
pub const COVERAGE_BAND: (f64, f64) = (0.88, 0.99);
pub const MIN_CONVERGED: f64 = 0.95;

pub fn validate(s: &Settings, opts: &ValidateOptions) -> Result<(), CliError> {
    let cfg = CalibrationConfig {
        cycles: opts.cycles,
        samples: opts.samples,
        approaches: opts.approaches,
        seed: s.seed.unwrap_or(0),
        sampler: opts.sampler,
        ..CalibrationConfig::default()
    };
    if cfg.cycles == 0 || cfg.samples == 0 || cfg.approaches == 0 {
        return Err(CliError::usage("cycles, samples and approaches must be positive"));
    }
    let report = calibrate(&cfg).map_err(CliError::model)?;
    let mut t = Table::new(vec!["approach", "coverage"]);
    for (a, c) in report.coverage.iter().enumerate() {
        t.push(vec![format!("a{a}"), pct(*c)]);
    }
    print!("{}", t.render());
    println!("converged fits: {}", pct(report.converged));
    if let Some(path) = &opts.out {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| CliError::new(Category::Internal, e))?;
        writeln!(w)?;
    }
    let (lo, hi) = COVERAGE_BAND;
    let covered = report.coverage.iter().all(|c| (lo..=hi).contains(c));
    if !covered || report.converged < MIN_CONVERGED {
        return Err(CliError::new(
            Category::Validation,
            format!(
                "calibration outside its band: coverage {:?} (want {}..{}), converged {} (want >= {})",
                report.coverage, lo, hi, report.converged, MIN_CONVERGED
            ),
        ));
    }
    Ok(())
}
