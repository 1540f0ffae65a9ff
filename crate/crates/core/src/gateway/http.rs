use std::env;
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    Backend, GatewayError, GenerationParams, Message, NativeToolCall, RawProviderError, Role,
    StopReason, ToolSchema, Turn, Usage,
};

pub const ENDPOINT_ENV: &str = "REPOMINE_ENDPOINT";
pub const API_KEY_ENV: &str = "REPOMINE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpConfig {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn from_env() -> Result<Self, GatewayError> {
        let endpoint = env::var(ENDPOINT_ENV)
            .map_err(|_| GatewayError::InvalidRequest(format!("{ENDPOINT_ENV} is not set")))?;
        Ok(Self {
            endpoint,
            api_key: env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(300),
        })
    }
}

/// Client for a chat-completions style endpoint.
pub struct HttpBackend {
    config: HttpConfig,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig, model: impl Into<String>) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::InvalidRequest(format!("http client: {e}")))?;
        Ok(Self {
            config,
            model: model.into(),
            client,
        })
    }

    fn request_body(&self, messages: &[Message], tools: Option<&ToolSchema>, params: &GenerationParams) -> Value {
        let messages: Vec<Value> = messages.iter().map(wire_message).collect();
        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        });
        if !params.stop_sequences.is_empty() {
            body["stop"] = json!(params.stop_sequences);
        }
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        if let Some(tool) = tools {
            body["tools"] = json!([{
                "type": "function",
                "function": {
                    "name": tool.name,
                    "description": tool.description,
                    "parameters": {
                        "type": "object",
                        "properties": { tool.parameter.clone(): { "type": "string" } },
                        "required": [tool.parameter],
                    },
                },
            }]);
            body["parallel_tool_calls"] = json!(false);
        }
        body
    }
}

fn wire_message(m: &Message) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut v = json!({ "role": role, "content": m.content });
    if let Some(call) = &m.tool_call {
        v["tool_calls"] = json!([{
            "id": call.id,
            "type": "function",
            "function": {
                "name": call.name,
                "arguments": json!({ "command": call.command }).to_string(),
            },
        }]);
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = json!(id);
    }
    if m.cache_marker {
        v["cache_control"] = json!({ "type": "ephemeral" });
    }
    v
}

fn count(v: &Value, path: &[&str]) -> u64 {
    path.iter()
        .try_fold(v, |v, k| v.get(*k))
        .and_then(Value::as_u64)
        .unwrap_or(0)
}

fn parse_usage(v: &Value) -> Usage {
    let u = &v["usage"];
    let read = count(u, &["cache_read_input_tokens"]).max(count(u, &["prompt_tokens_details", "cached_tokens"]));
    let write = count(u, &["cache_creation_input_tokens"]);
    // chat-completions prompt counts include cached tokens
    let prompt = count(u, &["prompt_tokens"]).max(count(u, &["input_tokens"]));
    Usage {
        input_tokens: prompt.saturating_sub(read + write),
        output_tokens: count(u, &["completion_tokens"]).max(count(u, &["output_tokens"])),
        cache_read_tokens: read,
        cache_write_tokens: write,
    }
}

/// Infer which closing-tag stop sequence fired when the provider only says "stop":
/// the text then ends inside an unclosed `<tag>`.
fn infer_stop(text: &str, stops: &[String]) -> Option<String> {
    stops
        .iter()
        .filter_map(|s| s.strip_prefix("</").map(|rest| (s, format!("<{rest}"))))
        .find(|(close, open)| match text.rfind(open.as_str()) {
            Some(p) => !text[p..].contains(close.as_str()),
            None => false,
        })
        .map(|(close, _)| close.clone())
}

fn parse_response(v: &Value, tools_enabled: bool, params: &GenerationParams) -> Result<Turn, GatewayError> {
    let malformed = |what: &str| GatewayError::Provider {
        message: format!("malformed response: {what}"),
        retryable: false,
    };
    let choice = v["choices"].get(0).ok_or_else(|| malformed("no choices"))?;
    let msg = &choice["message"];
    let text = msg["content"].as_str().unwrap_or_default().to_string();
    let usage = parse_usage(v);
    let finish = choice["finish_reason"].as_str().unwrap_or("stop");

    let calls = msg["tool_calls"].as_array().cloned().unwrap_or_default();
    if tools_enabled && !calls.is_empty() {
        let first = &calls[0];
        let args = first["function"]["arguments"].as_str().unwrap_or("{}");
        let args: Value = serde_json::from_str(args).map_err(|_| malformed("tool arguments"))?;
        let command = args["command"].as_str().unwrap_or_default().to_string();
        return Ok(Turn {
            text,
            native_tool_call: Some(NativeToolCall {
                id: first["id"].as_str().unwrap_or("call_0").to_string(),
                name: first["function"]["name"].as_str().unwrap_or_default().to_string(),
                command,
            }),
            usage,
            stop_reason: StopReason::ToolCall,
            matched_stop: None,
            dropped_tool_calls: calls.len() as u32 - 1,
        });
    }

    let explicit = choice["stop_sequence"]
        .as_str()
        .or_else(|| v["stop_sequence"].as_str())
        .map(str::to_string);
    let (stop_reason, matched_stop) = match finish {
        "length" | "max_tokens" => (StopReason::Length, None),
        "stop" | "stop_sequence" | "end_turn" => {
            match explicit.or_else(|| infer_stop(&text, &params.stop_sequences)) {
                Some(s) => (StopReason::StopSequence, Some(s)),
                None => (StopReason::End, None),
            }
        }
        _ => (StopReason::End, None),
    };
    Ok(Turn {
        text,
        native_tool_call: None,
        usage,
        stop_reason,
        matched_stop,
        dropped_tool_calls: 0,
    })
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn generate(
        &self,
        messages: &[Message],
        tools: Option<&ToolSchema>,
        params: &GenerationParams,
    ) -> Result<Turn, GatewayError> {
        let body = self.request_body(messages, tools, params);
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            let raw = if e.is_timeout() {
                RawProviderError::timeout()
            } else {
                RawProviderError::transport(e.to_string())
            };
            GatewayError::from_raw(&raw)
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            GatewayError::from_raw(&RawProviderError::transport(e.to_string()))
        })?;
        if !status.is_success() {
            return Err(GatewayError::from_raw(&RawProviderError::http(status.as_u16(), text)));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| GatewayError::Provider {
            message: format!("response is not JSON: {e}"),
            retryable: false,
        })?;
        if v.get("error").is_some_and(|e| !e.is_null()) {
            return Err(GatewayError::from_raw(&RawProviderError::http(status.as_u16(), v["error"].to_string())));
        }
        parse_response(&v, tools.is_some(), params)
    }
}
