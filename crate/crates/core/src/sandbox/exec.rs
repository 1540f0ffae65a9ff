use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::{Limits, SandboxError, ToolResult};

/// Appended to a stream that exceeded the cap.
pub const TRUNCATION_MARKER: &str = "\n[... output truncated ...]\n";

const POLL: Duration = Duration::from_millis(5);

/// Cut `text` to at most `cap` characters. A cut text ends in
/// [`TRUNCATION_MARKER`] and is exactly `cap` characters long (or just the
/// first `cap` characters of the marker when `cap` is smaller than it).
pub fn cap_output(text: &str, cap: usize) -> (String, bool) {
    let n = text.chars().count();
    if n <= cap {
        return (text.to_string(), false);
    }
    let marker_len = TRUNCATION_MARKER.chars().count();
    if cap < marker_len {
        return (TRUNCATION_MARKER.chars().take(cap).collect(), true);
    }
    let mut out: String = text.chars().take(cap - marker_len).collect();
    out.push_str(TRUNCATION_MARKER);
    (out, true)
}

/// Read a pipe to the end, keeping at most `keep` bytes.
fn drain<R: Read + Send + 'static>(mut pipe: R, keep: usize) -> thread::JoinHandle<(Vec<u8>, bool)> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut overflow = false;
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = keep.saturating_sub(kept.len());
                    if n > room {
                        overflow = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        (kept, overflow)
    })
}

fn exit_code(status: ExitStatus) -> i32 {
    status
        .code()
        .or_else(|| status.signal().map(|s| 128 + s))
        .unwrap_or(-1)
}

fn kill_group(pgid: u32) {
    // SAFETY: killpg has no memory-safety preconditions.
    unsafe {
        libc::killpg(pgid as libc::pid_t, libc::SIGKILL);
    }
}

/// Run `argv` in its own process group with a scrubbed environment, killing
/// the whole group on timeout.
pub(crate) fn run(
    argv: &[String],
    env: &[(&str, String)],
    command: &str,
    limits: &Limits,
) -> Result<ToolResult, SandboxError> {
    let started = Instant::now();
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .env_clear()
        .envs(env.iter().map(|(k, v)| (*k, v.as_str())))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    let mut child = cmd.spawn()?;
    let pgid = child.id();
    // enough bytes for `output_cap` characters of any width, plus one
    let keep = limits.output_cap * 4 + 4;
    let out = drain(child.stdout.take().expect("piped stdout"), keep);
    let err = drain(child.stderr.take().expect("piped stderr"), keep);

    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if started.elapsed() >= limits.timeout {
            timed_out = true;
            kill_group(pgid);
            break child.wait()?;
        }
        thread::sleep(POLL);
    };
    // stragglers that kept the pipes open
    kill_group(pgid);
    let (out, out_over) = out.join().unwrap_or_default();
    let (err, err_over) = err.join().unwrap_or_default();

    let (stdout, cut_out) = cap_output(&String::from_utf8_lossy(&out), limits.output_cap);
    let (stderr, cut_err) = cap_output(&String::from_utf8_lossy(&err), limits.output_cap);
    Ok(ToolResult {
        command: command.to_string(),
        exit_code: exit_code(status),
        stdout,
        stderr,
        truncated: cut_out || cut_err || out_over || err_over,
        timed_out,
        wall_time_ms: started.elapsed().as_millis() as u64,
    })
}
