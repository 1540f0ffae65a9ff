use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use repomine::sandbox::{fingerprint_dir, Isolation, IsolationRegistry, Limits, SandboxError, Workspace};
use repomine::task::RepoSpec;

fn bundle() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/repos/toyparse.bundle")
}

fn spec(revision: Option<&str>) -> RepoSpec {
    RepoSpec {
        name: "fixture/toyparse".into(),
        fixture: bundle(),
        revision: revision.map(str::to_string),
    }
}

fn isolation() -> Arc<dyn Isolation> {
    IsolationRegistry::builtin().create("namespace").unwrap()
}

fn pr_dump() -> BTreeMap<String, String> {
    BTreeMap::from([(
        "pr.json".to_string(),
        "{\n  \"number\": 7,\n  \"title\": \"Fix null pointer in eval\",\n  \"body\": \"see title\"\n}\n".to_string(),
    )])
}

fn provision(aux: &BTreeMap<String, String>) -> Workspace {
    Workspace::provision(&spec(None), aux, isolation(), Limits::default(), None).unwrap()
}

#[test]
fn workspace_holds_repo_and_aux_files() {
    let ws = provision(&pr_dump());
    let root = ws.root().unwrap();
    assert!(root.join("README.md").is_file());
    assert!(root.join("src/parser.c").is_file());
    assert!(root.join("aux/pr.json").is_file());
    assert_eq!(ws.aux_index(), ["pr.json"]);

    let r = ws.execute("cat aux/pr.json | grep title | head -1").unwrap();
    assert_eq!(r.exit_code, 0);
    assert_eq!(r.stdout.trim(), "\"title\": \"Fix null pointer in eval\",");
}

#[test]
fn revision_is_checked_out() {
    let ws = Workspace::provision(&spec(Some("a6895ca")), &BTreeMap::new(), isolation(), Limits::default(), None)
        .unwrap();
    let r = ws.execute("git log --oneline | wc -l").unwrap();
    assert_eq!(r.stdout.trim(), "1");
    assert!(!ws.root().unwrap().join("CMakeLists.txt").exists());
}

#[test]
fn fingerprints_are_reproducible() {
    let a = provision(&pr_dump());
    let b = provision(&pr_dump());
    let fa = a.fingerprint().unwrap();
    assert_eq!(fa, b.fingerprint().unwrap());
    a.teardown().unwrap();
    let c = provision(&pr_dump());
    assert_eq!(fa, c.fingerprint().unwrap());
    assert_ne!(fa, provision(&BTreeMap::new()).fingerprint().unwrap());
}

#[test]
fn network_is_unreachable() {
    let ws = provision(&BTreeMap::new());
    let r = ws.execute("curl -sS --max-time 5 http://example.com").unwrap();
    assert_ne!(r.exit_code, 0);
}

#[test]
fn hostile_commands_cannot_touch_siblings() {
    let outer = tempfile::tempdir().unwrap();
    let sibling = outer.path().join("sibling");
    std::fs::create_dir_all(&sibling).unwrap();
    std::fs::write(sibling.join("keep.txt"), "precious").unwrap();
    let before = fingerprint_dir(&sibling).unwrap();

    let ws = Workspace::provision(&spec(None), &BTreeMap::new(), isolation(), Limits::default(), Some(outer.path()))
        .unwrap();
    let target = sibling.display();
    for hostile in [
        format!("rm -rf {target}"),
        format!("echo pwned > {target}/keep.txt"),
        format!("touch {target}/new.txt"),
        format!("cd ../.. && rm -rf sibling"),
        "touch /tmp/repomine-escape".to_string(),
    ] {
        let _ = ws.execute(&hostile).unwrap();
    }
    assert_eq!(before, fingerprint_dir(&sibling).unwrap());
    assert!(!std::path::Path::new("/tmp/repomine-escape").exists());
    // writes inside the workspace still work
    assert_eq!(ws.execute("echo ok > note.txt && cat note.txt").unwrap().stdout, "ok\n");
}

#[test]
fn failing_command_is_a_result_not_an_error() {
    let ws = provision(&BTreeMap::new());
    let r = ws.execute("ls /nonexistent").unwrap();
    assert_ne!(r.exit_code, 0);
    assert!(!r.stderr.is_empty());
    assert!(!r.timed_out);
}

#[test]
fn runaway_output_is_capped_and_killed() {
    let ws = provision(&BTreeMap::new());
    let limits = Limits {
        timeout: Duration::from_secs(1),
        output_cap: 8192,
    };
    let r = ws.execute_with("yes", &limits).unwrap();
    assert!(r.timed_out);
    assert!(r.truncated);
    assert_eq!(r.stdout.chars().count(), 8192);
    assert_ne!(r.exit_code, 0);
}

#[test]
fn teardown_is_idempotent_and_final() {
    let ws = provision(&BTreeMap::new());
    let root = ws.root().unwrap();
    ws.teardown().unwrap();
    ws.teardown().unwrap();
    assert!(!root.exists());
    assert!(matches!(ws.execute("true"), Err(SandboxError::TornDown(_))));
}

#[test]
fn missing_fixture_is_reported() {
    let mut s = spec(None);
    s.fixture = PathBuf::from("/nonexistent/repo.bundle");
    let err = Workspace::provision(&s, &BTreeMap::new(), isolation(), Limits::default(), None).unwrap_err();
    assert!(matches!(err, SandboxError::MissingFixture(_)));
}
