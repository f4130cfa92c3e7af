//! Scripted backend for tests and offline runs.
//!
//! A scenario file holds one reply script per run; run `k` uses script
//! `k % len(runs)`, so a single script drives a whole campaign. Sessions
//! walk their script step by step, which makes the mock fully deterministic
//! given a scenario file, independent of request content or run scheduling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Backend, BackendError, BackendMetadata, BackendReply, ChatMessage, DialogueSession,
};
use crate::tools::FunctionSchema;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// One scripted reply, or a scripted failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptedReply {
    FunctionCall { name: String, arguments: String },
    FinalText { content: String },
    ContextLengthError,
    TransportError,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunScript {
    pub replies: Vec<ScriptedReply>,
}

/// On-disk scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub format_version: u32,
    pub runs: Vec<RunScript>,
}

/// Deterministic scripted backend.
pub struct MockBackend {
    runs: Vec<Vec<ScriptedReply>>,
}

impl MockBackend {
    pub fn new(runs: Vec<Vec<ScriptedReply>>) -> Self {
        assert!(!runs.is_empty(), "scenario needs at least one run script");
        Self { runs }
    }

    pub fn from_doc(doc: ScenarioDoc) -> Result<Self, BackendError> {
        if doc.format_version != SCENARIO_FORMAT_VERSION {
            return Err(BackendError::Persistence(format!(
                "unsupported scenario format_version {}",
                doc.format_version
            )));
        }
        if doc.runs.is_empty() {
            return Err(BackendError::Persistence(
                "scenario has no run scripts".to_string(),
            ));
        }
        Ok(Self::new(doc.runs.into_iter().map(|r| r.replies).collect()))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Persistence(format!("{}: {e}", path.display())))?;
        let doc: ScenarioDoc = serde_json::from_str(&text)
            .map_err(|e| BackendError::Persistence(format!("{}: {e}", path.display())))?;
        Self::from_doc(doc)
    }
}

impl Backend for MockBackend {
    fn begin_dialogue(&self, run_index: usize) -> Box<dyn DialogueSession + '_> {
        let script = &self.runs[run_index % self.runs.len()];
        Box::new(MockSession { script, step: 0 })
    }

    fn metadata(&self) -> BackendMetadata {
        BackendMetadata {
            model: "mock".to_string(),
            temperature: 0.0,
            seed: None,
        }
    }
}

struct MockSession<'a> {
    script: &'a [ScriptedReply],
    step: usize,
}

impl DialogueSession for MockSession<'_> {
    fn request(
        &mut self,
        _history: &[ChatMessage],
        _schemas: &[FunctionSchema],
        _allow_tools: bool,
    ) -> Result<BackendReply, BackendError> {
        let reply = self.script.get(self.step).cloned().ok_or_else(|| {
            BackendError::ScriptExhausted(format!("script ended after {} replies", self.step))
        })?;
        self.step += 1;
        match reply {
            ScriptedReply::FunctionCall { name, arguments } => {
                Ok(BackendReply::function_call(name, arguments))
            }
            ScriptedReply::FinalText { content } => Ok(BackendReply::final_text(content)),
            ScriptedReply::ContextLengthError => Err(BackendError::ContextLength(
                "scripted context length error".to_string(),
            )),
            ScriptedReply::TransportError => Err(BackendError::Transport(
                "scripted transport error".to_string(),
            )),
        }
    }
}
