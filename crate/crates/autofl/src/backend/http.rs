//! Live adapter for an OpenAI-compatible chat-completions endpoint.
//!
//! Request building and response parsing are plain functions so they can be
//! tested without a server. The transport retries transient failures (5xx,
//! connection errors) up to a bounded number of attempts with exponential
//! backoff; context-length errors are never retried. A crude token-bucket
//! limiter bounds the request rate when `max_rps` is configured.

use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    Backend, BackendError, BackendMetadata, BackendReply, ChatMessage, DialogueSession, ReplyKind,
    Role, TokenUsage,
};
use crate::tools::FunctionSchema;

/// Configuration for the live adapter. The API key itself never appears
/// here; only the name of the environment variable holding it does.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub api_key_env: String,
    pub max_rps: Option<f64>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-4o-mini".to_string(),
            // High temperature keeps repeated runs diverse, which the
            // self-consistency aggregation depends on.
            temperature: 1.0,
            api_key_env: "OPENAI_API_KEY".to_string(),
            max_rps: None,
            timeout_secs: 120,
            max_attempts: 3,
        }
    }
}

impl LiveConfig {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Persistence(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Persistence(format!("{}: {e}", path.display())))
    }
}

pub struct HttpBackend {
    config: LiveConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    last_request: Mutex<Option<Instant>>,
}

impl HttpBackend {
    pub fn new(config: LiveConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            BackendError::Transport(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
            last_request: Mutex::new(None),
        })
    }

    fn throttle(&self) {
        let Some(rps) = self.config.max_rps else {
            return;
        };
        if rps <= 0.0 {
            return;
        }
        let min_interval = Duration::from_secs_f64(1.0 / rps);
        let mut last = self.last_request.lock().expect("rate limiter poisoned");
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < min_interval {
                std::thread::sleep(min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn send(
        &self,
        history: &[ChatMessage],
        schemas: &[FunctionSchema],
        allow_tools: bool,
    ) -> Result<BackendReply, BackendError> {
        let body = build_request_body(&self.config, history, schemas, allow_tools);
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));

        let mut last_error = BackendError::Transport("no attempts made".to_string());
        for attempt in 0..self.config.max_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(500 * (1 << (attempt - 1))));
            }
            self.throttle();
            let outcome = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send();
            match outcome {
                Err(e) => {
                    last_error = BackendError::Transport(e.to_string());
                }
                Ok(response) => {
                    let status = response.status();
                    let text = response
                        .text()
                        .map_err(|e| BackendError::Transport(e.to_string()))?;
                    if status.is_success() {
                        return parse_response_body(&text);
                    }
                    let error = classify_api_error(status.as_u16(), &text);
                    if !matches!(error, BackendError::Transport(_)) || !status.is_server_error() {
                        return Err(error);
                    }
                    last_error = error;
                }
            }
        }
        Err(last_error)
    }
}

impl Backend for HttpBackend {
    fn begin_dialogue(&self, _run_index: usize) -> Box<dyn DialogueSession + '_> {
        Box::new(HttpSession { backend: self })
    }

    fn metadata(&self) -> BackendMetadata {
        BackendMetadata {
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            seed: None,
        }
    }
}

struct HttpSession<'a> {
    backend: &'a HttpBackend,
}

impl DialogueSession for HttpSession<'_> {
    fn request(
        &mut self,
        history: &[ChatMessage],
        schemas: &[FunctionSchema],
        allow_tools: bool,
    ) -> Result<BackendReply, BackendError> {
        self.backend.send(history, schemas, allow_tools)
    }
}

/// Maps dialogue messages and schemas onto the chat-completions wire shape.
/// Tool schemas go out via the `functions` field; `function_call: "none"`
/// disables calls when tools are not allowed.
pub fn build_request_body(
    config: &LiveConfig,
    history: &[ChatMessage],
    schemas: &[FunctionSchema],
    allow_tools: bool,
) -> Value {
    let messages: Vec<Value> = history.iter().map(message_to_wire).collect();
    let mut body = json!({
        "model": config.model,
        "temperature": config.temperature,
        "messages": messages,
    });
    if !schemas.is_empty() {
        body["functions"] = Value::Array(schemas.iter().map(schema_to_wire).collect());
        body["function_call"] = Value::String(if allow_tools { "auto" } else { "none" }.to_string());
    }
    body
}

fn message_to_wire(message: &ChatMessage) -> Value {
    match message.role {
        Role::System => json!({"role": "system", "content": message.content}),
        Role::User => json!({"role": "user", "content": message.content}),
        Role::Assistant => json!({"role": "assistant", "content": message.content}),
        Role::FunctionCall => {
            let call = message.call.as_ref().expect("function_call carries call data");
            json!({
                "role": "assistant",
                "content": Value::Null,
                "function_call": {"name": call.name, "arguments": call.arguments},
            })
        }
        Role::FunctionResult => json!({
            "role": "function",
            "name": message.name.clone().unwrap_or_default(),
            "content": message.content,
        }),
    }
}

fn schema_to_wire(schema: &FunctionSchema) -> Value {
    let mut properties = serde_json::Map::new();
    let mut required = Vec::new();
    for param in &schema.parameters {
        properties.insert(
            param.name.clone(),
            json!({"type": "string", "description": param.description}),
        );
        required.push(Value::String(param.name.clone()));
    }
    json!({
        "name": schema.name,
        "description": schema.description,
        "parameters": {
            "type": "object",
            "properties": properties,
            "required": required,
        },
    })
}

/// Parses a successful chat-completions response into a reply.
pub fn parse_response_body(text: &str) -> Result<BackendReply, BackendError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| BackendError::Transport(format!("unparseable response: {e}")))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Transport("response has no choices".to_string()))?;
    let message = choice
        .get("message")
        .ok_or_else(|| BackendError::Transport("choice has no message".to_string()))?;
    let finish_reason = choice
        .get("finish_reason")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();
    let token_usage = value.get("usage").and_then(|u| {
        Some(TokenUsage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
            total_tokens: u.get("total_tokens")?.as_u64()?,
        })
    });

    let kind = match message.get("function_call") {
        Some(call) if !call.is_null() => ReplyKind::FunctionCall {
            name: call
                .get("name")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
            arguments: call
                .get("arguments")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
        },
        _ => ReplyKind::FinalText {
            content: message
                .get("content")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
        },
    };
    Ok(BackendReply {
        kind,
        finish_reason,
        token_usage,
    })
}

/// Distinguishes context-window exhaustion from transient transport trouble.
pub fn classify_api_error(status: u16, body: &str) -> BackendError {
    let detail: Value = serde_json::from_str(body).unwrap_or(Value::Null);
    let code = detail
        .pointer("/error/code")
        .and_then(Value::as_str)
        .unwrap_or_default();
    let message = detail
        .pointer("/error/message")
        .and_then(Value::as_str)
        .unwrap_or(body);
    if code == "context_length_exceeded" || message.contains("maximum context length") {
        return BackendError::ContextLength(message.to_string());
    }
    BackendError::Transport(format!("HTTP {status}: {message}"))
}
