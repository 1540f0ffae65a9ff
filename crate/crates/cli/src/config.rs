use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use repomine::runner::ErrorPolicy;
use serde::Deserialize;

use crate::error::CliError;

/// Looked up in the working directory when no config file is named.
pub const DEFAULT_CONFIG: &str = "repomine.toml";

/// Options shared by every subcommand. Flags win over environment variables,
/// which win over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with defaults for the options below
    #[arg(long, global = true, env = "REPOMINE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Task definitions
    #[arg(long, global = true, env = "REPOMINE_TASKS")]
    pub tasks: Option<PathBuf>,
    /// Price sheets; the built-in sheets when absent
    #[arg(long, global = true, env = "REPOMINE_PRICES")]
    pub prices: Option<PathBuf>,
    /// Experiment store directory
    #[arg(long, global = true, env = "REPOMINE_STORE")]
    pub store: Option<PathBuf>,
    /// Generation backend: mock or http
    #[arg(long, global = true, env = "REPOMINE_BACKEND")]
    pub backend: Option<String>,
    /// Directory of mock scripts; `mock/` next to the task file by default
    #[arg(long, global = true, env = "REPOMINE_MOCK_DIR")]
    pub mock_dir: Option<PathBuf>,
    /// Sandbox isolation: namespace or docker
    #[arg(long, global = true, env = "REPOMINE_ISOLATION")]
    pub isolation: Option<String>,
    #[arg(long, global = true, env = "REPOMINE_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = "REPOMINE_WORKERS")]
    pub workers: Option<usize>,
    /// exclude or fail; eval uses both when unset
    #[arg(long, global = true, env = "REPOMINE_ERROR_POLICY")]
    pub error_policy: Option<ErrorPolicy>,
    /// Half-width of the region of practical equivalence, in accuracy units
    #[arg(long, global = true, env = "REPOMINE_ROPE")]
    pub rope: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    tasks: Option<PathBuf>,
    prices: Option<PathBuf>,
    store: Option<PathBuf>,
    backend: Option<String>,
    mock_dir: Option<PathBuf>,
    isolation: Option<String>,
    seed: Option<u64>,
    workers: Option<usize>,
    error_policy: Option<String>,
    rope: Option<f64>,
}

/// Fully resolved options.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub tasks: PathBuf,
    pub prices: Option<PathBuf>,
    pub store: PathBuf,
    pub backend: String,
    pub mock_dir: PathBuf,
    pub isolation: String,
    pub seed: Option<u64>,
    pub workers: usize,
    pub error_policy: Option<ErrorPolicy>,
    pub rope: f64,
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let (file, base) = match &args.config {
            Some(p) => (load_file(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
            None if Path::new(DEFAULT_CONFIG).is_file() => (load_file(Path::new(DEFAULT_CONFIG))?, PathBuf::new()),
            None => (FileConfig::default(), PathBuf::new()),
        };
        let rel = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let file_policy = file
            .error_policy
            .map(|s| s.parse::<ErrorPolicy>().map_err(CliError::config))
            .transpose()?;
        let tasks = args
            .tasks
            .clone()
            .or(file.tasks.map(rel))
            .unwrap_or_else(|| PathBuf::from("tasks.toml"));
        let mock_dir = args
            .mock_dir
            .clone()
            .or(file.mock_dir.map(rel))
            .unwrap_or_else(|| tasks.parent().unwrap_or(Path::new("")).join("mock"));
        let rope = args.rope.or(file.rope).unwrap_or(repomine_bayes::DEFAULT_ROPE);
        if !(rope > 0.0 && rope < 1.0) {
            return Err(CliError::usage(format!("--rope must lie in (0, 1), got {rope}")));
        }
        Ok(Self {
            tasks,
            prices: args.prices.clone().or(file.prices.map(rel)),
            store: args
                .store
                .clone()
                .or(file.store.map(rel))
                .unwrap_or_else(|| PathBuf::from("store")),
            backend: args.backend.clone().or(file.backend).unwrap_or_else(|| "mock".into()),
            mock_dir,
            isolation: args
                .isolation
                .clone()
                .or(file.isolation)
                .unwrap_or_else(|| "namespace".into()),
            seed: args.seed.or(file.seed),
            workers: args.workers.or(file.workers).unwrap_or(1).max(1),
            error_policy: args.error_policy.or(file_policy),
            rope,
        })
    }

    pub fn require_seed(&self, command: &str) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::usage(format!("{command} needs a seed (--seed, REPOMINE_SEED or the config file)")))
    }
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}
