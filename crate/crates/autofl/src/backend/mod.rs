//! The chat-with-tools LLM boundary.
//!
//! A [`Backend`] hands out one [`DialogueSession`] per run; each session is
//! strictly sequential while the backend itself may serve concurrent runs.
//! Three implementations exist: a scripted mock ([`mock::MockBackend`]), a
//! record/replay layer ([`transcript`]), and a live HTTP adapter speaking an
//! OpenAI-compatible chat-completions protocol ([`http::HttpBackend`]).
//!
//! The orchestrator only ever observes [`BackendReply`] values, so backends
//! are substitutable.

pub mod http;
pub mod mock;
pub mod transcript;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tools::FunctionSchema;

/// Reminder appended when the model requests a tool although tools are
/// disabled; one re-ask happens before coercing the call into text.
pub const NO_TOOLS_REMINDER: &str =
    "Function calls are not available for this reply. Answer directly as plain text.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    FunctionCall,
    FunctionResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionCallData {
    pub name: String,
    pub arguments: String,
}

/// One message in a dialogue. `call` is set for `function_call` messages;
/// `name` is set for `function_result` messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<FunctionCallData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
            call: None,
            name: None,
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
            call: None,
            name: None,
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            call: None,
            name: None,
        }
    }

    pub fn function_call(name: impl Into<String>, arguments: impl Into<String>) -> Self {
        Self {
            role: Role::FunctionCall,
            content: String::new(),
            call: Some(FunctionCallData {
                name: name.into(),
                arguments: arguments.into(),
            }),
            name: None,
        }
    }

    pub fn function_result(name: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: Role::FunctionResult,
            content: content.into(),
            call: None,
            name: Some(name.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

/// What the model replied: either a function-call request or final text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplyKind {
    FunctionCall { name: String, arguments: String },
    FinalText { content: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendReply {
    #[serde(flatten)]
    pub kind: ReplyKind,
    pub finish_reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
}

impl BackendReply {
    pub fn final_text(content: impl Into<String>) -> Self {
        Self {
            kind: ReplyKind::FinalText {
                content: content.into(),
            },
            finish_reason: "stop".to_string(),
            token_usage: None,
        }
    }

    pub fn function_call(name: impl Into<String>, arguments: impl Into<String>) -> Self {
        Self {
            kind: ReplyKind::FunctionCall {
                name: name.into(),
                arguments: arguments.into(),
            },
            finish_reason: "function_call".to_string(),
            token_usage: None,
        }
    }
}

/// Identity of the model behind a backend, echoed into output documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendMetadata {
    pub model: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// The request exceeded the model's context window.
    #[error("context length exceeded: {0}")]
    ContextLength(String),
    /// Transport failure that persisted through the retry budget.
    #[error("transport error: {0}")]
    Transport(String),
    /// A scripted or replayed backend ran out of entries.
    #[error("scripted replies exhausted: {0}")]
    ScriptExhausted(String),
    /// A replayed request diverged from the recorded transcript.
    #[error("transcript fingerprint mismatch at entry {index}: expected {expected}, got {actual}")]
    FingerprintMismatch {
        index: usize,
        expected: String,
        actual: String,
    },
    /// Persisting a transcript failed.
    #[error("transcript persistence failed: {0}")]
    Persistence(String),
}

/// One run's strictly sequential exchange with the model.
pub trait DialogueSession {
    fn request(
        &mut self,
        history: &[ChatMessage],
        schemas: &[FunctionSchema],
        allow_tools: bool,
    ) -> Result<BackendReply, BackendError>;
}

/// A source of dialogue sessions, shareable across concurrent runs.
pub trait Backend: Send + Sync {
    /// Starts the dialogue for the run with the given zero-based index.
    fn begin_dialogue(&self, run_index: usize) -> Box<dyn DialogueSession + '_>;

    fn metadata(&self) -> BackendMetadata;
}

/// Requests a completion, enforcing that `allow_tools = false` always yields
/// final text: a function-call reply triggers one re-ask with an appended
/// reminder, after which a second function call is coerced by treating its
/// raw arguments as the answer text.
pub fn complete(
    session: &mut dyn DialogueSession,
    history: &[ChatMessage],
    schemas: &[FunctionSchema],
    allow_tools: bool,
) -> Result<BackendReply, BackendError> {
    debug_assert!(
        matches!(history.first().map(|m| m.role), Some(Role::System)),
        "dialogue must start with a system message"
    );
    let reply = session.request(history, schemas, allow_tools)?;
    if allow_tools {
        return Ok(reply);
    }
    let ReplyKind::FunctionCall { name, arguments } = &reply.kind else {
        return Ok(reply);
    };

    let mut extended = history.to_vec();
    extended.push(ChatMessage::function_call(name, arguments));
    extended.push(ChatMessage::user(NO_TOOLS_REMINDER));
    let second = session.request(&extended, schemas, false)?;
    match second.kind {
        ReplyKind::FinalText { .. } => Ok(second),
        ReplyKind::FunctionCall { arguments, .. } => Ok(BackendReply {
            kind: ReplyKind::FinalText { content: arguments },
            finish_reason: "coerced_function_call".to_string(),
            token_usage: second.token_usage,
        }),
    }
}

/// Stable fingerprint of a request: SHA-256 over the canonical serialization
/// of the message chain, the available schemas, and the tool flag.
pub fn request_fingerprint(
    history: &[ChatMessage],
    schemas: &[FunctionSchema],
    allow_tools: bool,
) -> String {
    #[derive(Serialize)]
    struct Payload<'a> {
        history: &'a [ChatMessage],
        schemas: &'a [FunctionSchema],
        allow_tools: bool,
    }
    let bytes = serde_json::to_vec(&Payload {
        history,
        schemas,
        allow_tools,
    })
    .expect("request payload always serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex_string(&hasher.finalize())
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
