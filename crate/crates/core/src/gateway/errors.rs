use super::FailureKind;

/// A failed provider exchange as seen on the wire.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawProviderError {
    pub status: Option<u16>,
    pub body: String,
    pub timed_out: bool,
    /// The request never produced a response (connection refused, reset, DNS).
    pub transport: bool,
}

impl RawProviderError {
    pub fn http(status: u16, body: impl Into<String>) -> Self {
        Self {
            status: Some(status),
            body: body.into(),
            ..Self::default()
        }
    }

    pub fn timeout() -> Self {
        Self {
            timed_out: true,
            body: "request timed out".into(),
            ..Self::default()
        }
    }

    pub fn transport(body: impl Into<String>) -> Self {
        Self {
            transport: true,
            body: body.into(),
            ..Self::default()
        }
    }

    pub fn is_retryable(&self) -> bool {
        if self.timed_out || self.transport {
            return true;
        }
        match self.status {
            Some(429) | Some(408) => true,
            Some(s) => s >= 500,
            None => true,
        }
    }

    pub fn summary(&self) -> String {
        let mut body: String = self.body.chars().take(300).collect();
        if body.len() < self.body.len() {
            body.push('…');
        }
        match self.status {
            Some(s) => format!("HTTP {s}: {body}"),
            None => body,
        }
    }
}

const OVERFLOW_MARKERS: [&str; 8] = [
    "too long",
    "context length",
    "context_length",
    "context window",
    "maximum context",
    "too many tokens",
    "too many input tokens",
    "exceeds the model",
];

/// Classify a provider failure. Overflow is recognized from the status
/// (413) or the error body; everything else is a provider error.
pub fn map_provider_error(raw: &RawProviderError) -> FailureKind {
    if raw.timed_out || raw.transport {
        return FailureKind::ProviderError;
    }
    if raw.status == Some(413) {
        return FailureKind::ContextOverflow;
    }
    let body = raw.body.to_lowercase();
    if OVERFLOW_MARKERS.iter().any(|m| body.contains(m)) {
        return FailureKind::ContextOverflow;
    }
    FailureKind::ProviderError
}
