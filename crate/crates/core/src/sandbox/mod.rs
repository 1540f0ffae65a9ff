//! Isolated per-experiment workspaces.
//!
//! A [`Workspace`] holds a clean checkout of one repository plus auxiliary
//! files under `aux/`, and runs shell commands through an [`Isolation`]
//! mechanism that removes network access and makes everything outside the
//! workspace read-only. Mechanisms are registered by name in an
//! [`IsolationRegistry`].

mod exec;
mod fingerprint;
mod isolation;
mod workspace;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exec::{cap_output, TRUNCATION_MARKER};
pub use fingerprint::fingerprint_dir;
pub use isolation::{DockerIsolation, NamespaceIsolation};
pub use workspace::{Workspace, AUX_DIR};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
/// Characters kept per output stream.
pub const DEFAULT_OUTPUT_CAP: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub timeout: Duration,
    pub output_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            timeout: DEFAULT_TIMEOUT,
            output_cap: DEFAULT_OUTPUT_CAP,
        }
    }
}

/// Result of one command. A stream that was cut is exactly `output_cap`
/// characters long, ending in [`TRUNCATION_MARKER`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub command: String,
    /// Process exit code; 128 + signal number when killed.
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
    pub truncated: bool,
    pub timed_out: bool,
    pub wall_time_ms: u64,
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("repository fixture not found: {0}")]
    MissingFixture(String),
    #[error("provisioning failed: {0}")]
    Provision(String),
    #[error("aux file '{0}' collides with an existing file")]
    AuxCollision(String),
    #[error("invalid aux file name '{0}'")]
    AuxName(String),
    #[error("workspace {0} has been torn down")]
    TornDown(String),
    #[error("isolation '{name}' unavailable: {message}")]
    Isolation { name: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A way to run a command so that it cannot reach the network or write
/// outside the workspace root.
pub trait Isolation: Send + Sync {
    fn name(&self) -> &str;

    /// Program and arguments that run `script` with `bash -c` inside `root`.
    fn argv(&self, root: &std::path::Path, script: &str) -> Vec<String>;

    /// Check that the mechanism works on this host.
    fn probe(&self) -> Result<(), SandboxError>;
}

pub type IsolationFactory = Box<dyn Fn() -> Arc<dyn Isolation> + Send + Sync>;

/// Isolation mechanisms keyed by name.
#[derive(Default)]
pub struct IsolationRegistry {
    factories: BTreeMap<String, IsolationFactory>,
}

impl IsolationRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `namespace` (Linux user/mount/net namespaces) and `docker`.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        r.register("namespace", || Arc::new(NamespaceIsolation::new()) as Arc<dyn Isolation>);
        r.register("docker", || Arc::new(DockerIsolation::from_env()) as Arc<dyn Isolation>);
        r
    }

    pub fn register<F>(&mut self, name: impl Into<String>, factory: F)
    where
        F: Fn() -> Arc<dyn Isolation> + Send + Sync + 'static,
    {
        self.factories.insert(name.into(), Box::new(factory));
    }

    pub fn create(&self, name: &str) -> Result<Arc<dyn Isolation>, SandboxError> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| SandboxError::Isolation {
                name: name.into(),
                message: format!(
                    "not registered (known: {})",
                    self.factories.keys().cloned().collect::<Vec<_>>().join(", ")
                ),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl crate::approach::ShellExecutor for Workspace {
    fn execute(&mut self, command: &str) -> Result<ToolResult, String> {
        Workspace::execute(self, command).map_err(|e| e.to_string())
    }
}
