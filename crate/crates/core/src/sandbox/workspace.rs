use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use tempfile::TempDir;

use super::exec;
use super::{fingerprint_dir, Isolation, Limits, SandboxError, ToolResult};
use crate::task::RepoSpec;

/// Directory, relative to the workspace root, that holds auxiliary files.
pub const AUX_DIR: &str = "aux";

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

struct Live {
    _dir: TempDir,
    root: PathBuf,
}

/// A provisioned working copy owned by one experiment.
///
/// Commands run one at a time. After [`Workspace::teardown`] all files are
/// gone and further commands fail with [`SandboxError::TornDown`].
pub struct Workspace {
    id: String,
    repo: RepoSpec,
    aux_index: Vec<String>,
    provisioned_at: DateTime<Utc>,
    isolation: Arc<dyn Isolation>,
    limits: Limits,
    live: Mutex<Option<Live>>,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace")
            .field("id", &self.id)
            .field("repo", &self.repo.name)
            .field("isolation", &self.isolation.name())
            .finish()
    }
}

fn git(args: &[&str], cwd: Option<&Path>) -> Result<(), SandboxError> {
    let mut cmd = Command::new("git");
    cmd.args(args)
        .env_clear()
        .env("PATH", "/usr/local/bin:/usr/bin:/bin")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_TERMINAL_PROMPT", "0")
        .env("HOME", "/nonexistent");
    if let Some(dir) = cwd {
        cmd.current_dir(dir);
    }
    let out = cmd
        .output()
        .map_err(|e| SandboxError::Provision(format!("git: {e}")))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(SandboxError::Provision(format!(
            "git {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )))
    }
}

fn is_git_source(path: &Path) -> bool {
    path.is_file() || path.join(".git").exists() || (path.join("HEAD").is_file() && path.join("objects").is_dir())
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), SandboxError> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        let kind = entry.file_type()?;
        if kind.is_symlink() {
            std::os::unix::fs::symlink(fs::read_link(entry.path())?, &target)?;
        } else if kind.is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else {
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

fn check_aux_name(name: &str) -> Result<(), SandboxError> {
    let path = Path::new(name);
    let plain = !name.is_empty()
        && path
            .components()
            .all(|c| matches!(c, Component::Normal(_)));
    if plain {
        Ok(())
    } else {
        Err(SandboxError::AuxName(name.to_string()))
    }
}

impl Workspace {
    /// Clone or copy `repo` into a fresh directory under `base` (the system
    /// temp directory when `None`) and write `aux_files` into `aux/`.
    ///
    /// Bundles, working copies and bare repositories are cloned and checked
    /// out at the requested revision; plain directories are copied.
    pub fn provision(
        repo: &RepoSpec,
        aux_files: &BTreeMap<String, String>,
        isolation: Arc<dyn Isolation>,
        limits: Limits,
        base: Option<&Path>,
    ) -> Result<Self, SandboxError> {
        let fixture = &repo.fixture;
        if !fixture.exists() {
            return Err(SandboxError::MissingFixture(fixture.display().to_string()));
        }
        let dir = match base {
            Some(b) => {
                fs::create_dir_all(b)?;
                tempfile::Builder::new().prefix("ws-").tempdir_in(b)?
            }
            None => tempfile::Builder::new().prefix("repomine-ws-").tempdir()?,
        };
        let root = dir.path().join("repo");

        if is_git_source(fixture) {
            let src = fixture.to_string_lossy();
            let dst = root.to_string_lossy();
            git(&["clone", "--quiet", "--no-hardlinks", &src, &dst], None)?;
            if let Some(rev) = &repo.revision {
                git(&["checkout", "--quiet", "--detach", rev], Some(&root))?;
            }
        } else {
            if repo.revision.is_some() {
                return Err(SandboxError::Provision(format!(
                    "{} is not a git repository; a revision cannot be checked out",
                    fixture.display()
                )));
            }
            copy_tree(fixture, &root)?;
        }

        if !aux_files.is_empty() {
            let aux = root.join(AUX_DIR);
            fs::create_dir_all(&aux)?;
            for (name, content) in aux_files {
                check_aux_name(name)?;
                let path = aux.join(name);
                if path.exists() {
                    return Err(SandboxError::AuxCollision(name.clone()));
                }
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&path, content)?;
            }
        }

        let id = format!("ws{}", NEXT_ID.fetch_add(1, Ordering::Relaxed));
        log::debug!("provisioned {id} for {} at {}", repo.name, root.display());
        Ok(Self {
            id,
            repo: repo.clone(),
            aux_index: aux_files.keys().cloned().collect(),
            provisioned_at: Utc::now(),
            isolation,
            limits,
            live: Mutex::new(Some(Live { _dir: dir, root })),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn repo(&self) -> &RepoSpec {
        &self.repo
    }

    /// Names of the files under `aux/`.
    pub fn aux_index(&self) -> &[String] {
        &self.aux_index
    }

    pub fn provisioned_at(&self) -> DateTime<Utc> {
        self.provisioned_at
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    /// Root of the working copy, or `None` after teardown.
    pub fn root(&self) -> Option<PathBuf> {
        self.live.lock().unwrap().as_ref().map(|l| l.root.clone())
    }

    fn environment(root: &Path) -> Vec<(&'static str, String)> {
        vec![
            ("PATH", "/usr/local/bin:/usr/bin:/bin".into()),
            ("HOME", root.display().to_string()),
            ("LANG", "C.UTF-8".into()),
            ("TERM", "dumb".into()),
            ("GIT_PAGER", "cat".into()),
            ("PAGER", "cat".into()),
            ("GIT_CONFIG_NOSYSTEM", "1".into()),
            ("GIT_CONFIG_COUNT", "1".into()),
            ("GIT_CONFIG_KEY_0", "safe.directory".into()),
            ("GIT_CONFIG_VALUE_0", "*".into()),
        ]
    }

    /// Run `command` with `bash -c` in the workspace root under the default limits.
    pub fn execute(&self, command: &str) -> Result<ToolResult, SandboxError> {
        self.execute_with(command, &self.limits)
    }

    /// Nonzero exits, timeouts and kills are reported in the result, not as errors.
    pub fn execute_with(&self, command: &str, limits: &Limits) -> Result<ToolResult, SandboxError> {
        let guard = self.live.lock().unwrap();
        let live = guard
            .as_ref()
            .ok_or_else(|| SandboxError::TornDown(self.id.clone()))?;
        let argv = self.isolation.argv(&live.root, command);
        exec::run(&argv, &Self::environment(&live.root), command, limits)
    }

    /// Content fingerprint of the working copy, `.git` excluded.
    pub fn fingerprint(&self) -> Result<String, SandboxError> {
        let guard = self.live.lock().unwrap();
        let live = guard
            .as_ref()
            .ok_or_else(|| SandboxError::TornDown(self.id.clone()))?;
        Ok(fingerprint_dir(&live.root)?)
    }

    /// Remove all files. Repeated calls are no-ops.
    pub fn teardown(&self) -> Result<(), SandboxError> {
        let live = self.live.lock().unwrap().take();
        if let Some(Live { _dir, .. }) = live {
            _dir.close()?;
            log::debug!("tore down {}", self.id);
        }
        Ok(())
    }
}
