//! Splitting shell command lines into pipeline and chain stages.
//!
//! The splitter is lossless: concatenating every stage and separator
//! reproduces the input byte for byte. It understands quotes, backslash
//! escapes and parenthesized or `$(...)` groups well enough to avoid splitting
//! inside them; anything it cannot make sense of is reported under
//! [`OTHER`] by [`command_name`].

use serde::{Deserialize, Serialize};

/// Name reported for stages whose command cannot be determined.
pub const OTHER: &str = "other";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Separator {
    Pipe,
    And,
    Or,
    Semicolon,
    Newline,
}

impl Separator {
    pub fn as_str(self) -> &'static str {
        match self {
            Separator::Pipe => "|",
            Separator::And => "&&",
            Separator::Or => "||",
            Separator::Semicolon => ";",
            Separator::Newline => "\n",
        }
    }
}

/// One stage: its raw text and the separator that ends it, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage<'a> {
    pub text: &'a str,
    pub separator: Option<Separator>,
    /// Quotes or groups were left open inside this stage.
    pub unbalanced: bool,
}

pub fn split_stages(line: &str) -> Vec<Stage<'_>> {
    let bytes = line.as_bytes();
    let mut stages = Vec::new();
    let mut start = 0;
    let mut i = 0;
    let mut single = false;
    let mut double = false;
    let mut depth = 0usize;
    let mut backtick = false;
    while i < bytes.len() {
        let c = bytes[i];
        if single {
            single = c != b'\'';
            i += 1;
            continue;
        }
        if c == b'\\' {
            i += 2;
            continue;
        }
        if double {
            match c {
                b'"' => double = false,
                b'`' => backtick = !backtick,
                _ => {}
            }
            i += 1;
            continue;
        }
        match c {
            b'\'' => single = true,
            b'"' => double = true,
            b'`' => backtick = !backtick,
            b'(' => depth += 1,
            b')' => depth = depth.saturating_sub(1),
            _ if depth > 0 || backtick => {}
            b'|' | b'&' | b';' | b'\n' => {
                let next = bytes.get(i + 1).copied();
                let sep = match (c, next) {
                    (b'|', Some(b'|')) => Some((Separator::Or, 2)),
                    (b'|', _) => Some((Separator::Pipe, 1)),
                    (b'&', Some(b'&')) => Some((Separator::And, 2)),
                    (b';', _) => Some((Separator::Semicolon, 1)),
                    (b'\n', _) => Some((Separator::Newline, 1)),
                    // a single & (background, redirection like 2>&1) does not split
                    _ => None,
                };
                if let Some((sep, width)) = sep {
                    stages.push(Stage {
                        text: &line[start..i],
                        separator: Some(sep),
                        unbalanced: false,
                    });
                    i += width;
                    start = i;
                    continue;
                }
            }
            _ => {}
        }
        i += 1;
    }
    let unbalanced = single || double || depth > 0 || backtick;
    stages.push(Stage {
        text: &line[start.min(line.len())..],
        separator: None,
        unbalanced,
    });
    stages
}

/// Reassemble stages; the inverse of [`split_stages`].
pub fn join_stages(stages: &[Stage<'_>]) -> String {
    let mut out = String::new();
    for s in stages {
        out.push_str(s.text);
        if let Some(sep) = s.separator {
            out.push_str(sep.as_str());
        }
    }
    out
}

/// Number of non-empty stages in a command line.
pub fn count_commands(line: &str) -> u32 {
    split_stages(line)
        .iter()
        .filter(|s| !s.text.trim().is_empty())
        .count() as u32
}

/// The command a stage runs: the program's base name, or `git <subcommand>`.
pub fn command_name(stage: &Stage<'_>) -> String {
    if stage.unbalanced {
        return OTHER.into();
    }
    let mut words = stage.text.split_whitespace().peekable();
    // leading environment assignments
    while let Some(w) = words.peek() {
        if is_assignment(w) {
            words.next();
        } else {
            break;
        }
    }
    let Some(first) = words.next() else {
        return OTHER.into();
    };
    let first = first.trim_matches(|c| c == '"' || c == '\'');
    if first.is_empty() || !first.chars().next().is_some_and(|c| c.is_ascii_alphanumeric() || c == '/' || c == '.' || c == '_') {
        return OTHER.into();
    }
    let base = first.rsplit('/').next().unwrap_or(first);
    if base.is_empty() {
        return OTHER.into();
    }
    if base != "git" {
        return base.to_string();
    }
    let mut rest = words;
    while let Some(w) = rest.next() {
        match w {
            "-C" | "-c" | "--git-dir" | "--work-tree" => {
                rest.next();
            }
            _ if w.starts_with('-') => {}
            sub => return format!("git {sub}"),
        }
    }
    "git".into()
}

fn is_assignment(word: &str) -> bool {
    match word.split_once('=') {
        Some((name, _)) => {
            !name.is_empty()
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !name.starts_with(|c: char| c.is_ascii_digit())
        }
        None => false,
    }
}

/// Command names of every non-empty stage, in order.
pub fn command_names(line: &str) -> Vec<String> {
    split_stages(line)
        .iter()
        .filter(|s| !s.text.trim().is_empty())
        .map(command_name)
        .collect()
}
