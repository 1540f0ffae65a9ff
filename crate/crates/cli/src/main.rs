//! `repomine`: plan and run classification experiments, then report on them.

mod commands;
mod config;
mod error;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use repomine::analysis::DEFAULT_MIN_DISAGREE;
use repomine_bayes::SamplerConfig;

use commands::{EvalOptions, RunOptions, TriageOptions, ValidateOptions};
use config::{CommonArgs, Settings};
use error::CliError;

#[derive(Parser)]
#[command(name = "repomine", version, about = "Classify repository artifacts with LLM approaches and evaluate them")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Copy)]
struct SamplerArgs {
    #[arg(long, default_value_t = SamplerConfig::default().chains)]
    chains: usize,
    #[arg(long, default_value_t = SamplerConfig::default().warmup)]
    warmup: usize,
    #[arg(long, default_value_t = SamplerConfig::default().draws)]
    draws: usize,
    #[arg(long, default_value_t = SamplerConfig::default().thin)]
    thin: usize,
}

impl SamplerArgs {
    fn config(self) -> SamplerConfig {
        SamplerConfig {
            chains: self.chains,
            warmup: self.warmup,
            draws: self.draws,
            thin: self.thin,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Plan the experiment grid and execute what the store lacks
    Run {
        /// Variants as kind@model, comma separated; the default set when absent
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        /// Run only the first N planned experiments
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 1000.0)]
        max_repo_mb: f64,
        /// Tokens between prompt cache markers
        #[arg(long, default_value_t = repomine::accounting::DEFAULT_CACHE_GRID)]
        cache_grid: u64,
        /// Write the plan without executing it
        #[arg(long)]
        dry_run: bool,
    },
    /// Resource, error, tool usage, step and confusion tables
    Report {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the accuracy model per task and compare approaches
    Eval {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluate a single task
        #[arg(long)]
        task: Option<String>,
        /// Write every posterior draw next to the summaries
        #[arg(long)]
        export_draws: bool,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Random and majority-class accuracy per task
    Baselines {
        #[arg(long)]
        json: bool,
    },
    /// Sample disagreement cases and record diagnoses interactively
    Triage {
        /// Diagnosis file; `diagnoses.jsonl` in the store by default
        #[arg(long)]
        diagnoses: Option<PathBuf>,
        #[arg(long, env = "REPOMINE_ANNOTATOR")]
        annotator: Option<String>,
        #[arg(long, default_value_t = 100)]
        sample_size: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_DISAGREE)]
        min_disagree: usize,
        /// Print verdict counts per task instead of prompting
        #[arg(long)]
        summary: bool,
    },
    /// Check sampler calibration on simulated data
    Validate {
        #[arg(long, default_value_t = 100)]
        cycles: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        approaches: usize,
        /// Write the full report as JSON
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let s = Settings::resolve(&cli.common)?;
    match cli.command {
        Command::Run {
            variants,
            limit,
            max_repo_mb,
            cache_grid,
            dry_run,
        } => commands::run(
            &s,
            &RunOptions {
                variants,
                limit,
                max_repo_mb,
                cache_grid,
                dry_run,
            },
        ),
        Command::Report { out } => commands::report(&s, out),
        Command::Eval {
            out,
            task,
            export_draws,
            sampler,
        } => commands::eval(
            &s,
            &EvalOptions {
                out,
                task,
                sampler: sampler.config(),
                export_draws,
            },
        ),
        Command::Baselines { json } => commands::baselines(&s, json),
        Command::Triage {
            diagnoses,
            annotator,
            sample_size,
            min_disagree,
            summary,
        } => commands::triage(
            &s,
            &TriageOptions {
                diagnoses,
                annotator,
                sample_size,
                min_disagree,
                summary,
            },
        ),
        Command::Validate {
            cycles,
            samples,
            approaches,
            out,
            sampler,
        } => commands::validate(
            &s,
            &ValidateOptions {
                cycles,
                samples,
                approaches,
                out,
                sampler: sampler.config(),
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
