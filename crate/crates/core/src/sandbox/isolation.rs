use std::env;
use std::path::Path;
use std::process::{Command, Stdio};

use super::{Isolation, SandboxError};

/// Runs inside `ROOT` after making every other mount read-only. Positional
/// arguments: `$1` workspace root, `$2` the command.
const NAMESPACE_SETUP: &str = r#"root="$1"; cmd="$2"
mount --bind "$root" "$root" || exit 125
while read -r dev mnt rest; do
  case "$mnt" in *\\*) continue;; esac
  [ "$mnt" = "$root" ] && continue
  mount -o remount,bind,ro "$mnt" 2>/dev/null || true
done < /proc/self/mounts
cd "$root" || exit 125
exec bash -c "$cmd""#;

/// Linux namespaces via `unshare`: a private mount namespace in which every
/// mount except the workspace is read-only, an empty network namespace, and
/// a PID namespace so stray processes die with the command.
#[derive(Debug, Clone, Default)]
pub struct NamespaceIsolation {
    _private: (),
}

impl NamespaceIsolation {
    pub fn new() -> Self {
        Self::default()
    }

    fn needs_user_namespace() -> bool {
        // SAFETY: geteuid has no preconditions.
        unsafe { libc::geteuid() != 0 }
    }
}

impl Isolation for NamespaceIsolation {
    fn name(&self) -> &str {
        "namespace"
    }

    fn argv(&self, root: &Path, script: &str) -> Vec<String> {
        let mut argv: Vec<String> = ["unshare", "--mount", "--net", "--pid", "--fork", "--kill-child"]
            .map(String::from)
            .to_vec();
        if Self::needs_user_namespace() {
            argv.push("--map-root-user".into());
        }
        argv.extend([
            "sh".into(),
            "-c".into(),
            NAMESPACE_SETUP.into(),
            "sh".into(),
            root.display().to_string(),
            script.into(),
        ]);
        argv
    }

    fn probe(&self) -> Result<(), SandboxError> {
        let dir = tempfile::tempdir()?;
        let argv = self.argv(dir.path(), "true");
        let status = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .output()?;
        if status.status.success() {
            Ok(())
        } else {
            Err(SandboxError::Isolation {
                name: self.name().into(),
                message: String::from_utf8_lossy(&status.stderr).trim().to_string(),
            })
        }
    }
}

pub const DOCKER_IMAGE_ENV: &str = "REPOMINE_SANDBOX_IMAGE";
const DEFAULT_IMAGE: &str = "debian:stable-slim";

/// A throwaway container without network and with a read-only root
/// filesystem; the workspace is the only writable bind mount.
#[derive(Debug, Clone)]
pub struct DockerIsolation {
    pub image: String,
}

impl DockerIsolation {
    pub fn new(image: impl Into<String>) -> Self {
        Self { image: image.into() }
    }

    pub fn from_env() -> Self {
        Self::new(env::var(DOCKER_IMAGE_ENV).unwrap_or_else(|_| DEFAULT_IMAGE.into()))
    }
}

impl Isolation for DockerIsolation {
    fn name(&self) -> &str {
        "docker"
    }

    fn argv(&self, root: &Path, script: &str) -> Vec<String> {
        vec![
            "docker".into(),
            "run".into(),
            "--rm".into(),
            "--network".into(),
            "none".into(),
            "--read-only".into(),
            "--tmpfs".into(),
            "/tmp".into(),
            "--volume".into(),
            format!("{}:/workspace", root.display()),
            "--workdir".into(),
            "/workspace".into(),
            self.image.clone(),
            "bash".into(),
            "-c".into(),
            script.into(),
        ]
    }

    fn probe(&self) -> Result<(), SandboxError> {
        let ok = Command::new("docker")
            .arg("version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false);
        if ok {
            Ok(())
        } else {
            Err(SandboxError::Isolation {
                name: self.name().into(),
                message: "docker daemon not reachable".into(),
            })
        }
    }
}
