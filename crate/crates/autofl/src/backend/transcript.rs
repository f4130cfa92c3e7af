//! Record/replay layer for deterministic end-to-end runs.
//!
//! [`RecordingBackend`] wraps any backend and captures every request
//! fingerprint together with the reply it produced, grouped per run.
//! [`ReplayBackend`] serves a recorded transcript back, verifying on every
//! request that the incoming fingerprint matches the recorded one — a
//! changed prompt or schema surfaces as a fingerprint mismatch instead of a
//! silently wrong reply.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    request_fingerprint, Backend, BackendError, BackendMetadata, BackendReply, ChatMessage,
    DialogueSession,
};
use crate::tools::FunctionSchema;

pub const TRANSCRIPT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub reply: BackendReply,
}

/// A recorded exchange: metadata plus per-run ordered entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transcript {
    pub format_version: u32,
    pub metadata: BackendMetadata,
    pub runs: Vec<Vec<TranscriptEntry>>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Persistence(format!("{}: {e}", path.display())))?;
        let doc: Self = serde_json::from_str(&text)
            .map_err(|e| BackendError::Persistence(format!("{}: {e}", path.display())))?;
        if doc.format_version != TRANSCRIPT_FORMAT_VERSION {
            return Err(BackendError::Persistence(format!(
                "unsupported transcript format_version {}",
                doc.format_version
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| BackendError::Persistence(e.to_string()))?;
        std::fs::write(path, text)
            .map_err(|e| BackendError::Persistence(format!("{}: {e}", path.display())))
    }
}

/// Wraps a backend and records every completed request.
pub struct RecordingBackend<B> {
    inner: B,
    seed: Option<u64>,
    runs: Mutex<Vec<Vec<TranscriptEntry>>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            seed: None,
            runs: Mutex::new(Vec::new()),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// The transcript captured so far.
    pub fn transcript(&self) -> Transcript {
        let mut metadata = self.inner.metadata();
        if self.seed.is_some() {
            metadata.seed = self.seed;
        }
        Transcript {
            format_version: TRANSCRIPT_FORMAT_VERSION,
            metadata,
            runs: self.runs.lock().expect("recording lock poisoned").clone(),
        }
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn begin_dialogue(&self, run_index: usize) -> Box<dyn DialogueSession + '_> {
        {
            let mut runs = self.runs.lock().expect("recording lock poisoned");
            while runs.len() <= run_index {
                runs.push(Vec::new());
            }
        }
        Box::new(RecordingSession {
            inner: self.inner.begin_dialogue(run_index),
            runs: &self.runs,
            run_index,
        })
    }

    fn metadata(&self) -> BackendMetadata {
        self.inner.metadata()
    }
}

struct RecordingSession<'a> {
    inner: Box<dyn DialogueSession + 'a>,
    runs: &'a Mutex<Vec<Vec<TranscriptEntry>>>,
    run_index: usize,
}

impl DialogueSession for RecordingSession<'_> {
    fn request(
        &mut self,
        history: &[ChatMessage],
        schemas: &[FunctionSchema],
        allow_tools: bool,
    ) -> Result<BackendReply, BackendError> {
        let reply = self.inner.request(history, schemas, allow_tools)?;
        let fingerprint = request_fingerprint(history, schemas, allow_tools);
        self.runs.lock().expect("recording lock poisoned")[self.run_index].push(TranscriptEntry {
            fingerprint,
            reply: reply.clone(),
        });
        Ok(reply)
    }
}

/// Serves a recorded transcript, request by request.
pub struct ReplayBackend {
    transcript: Transcript,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        Self { transcript }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(Transcript::load(path)?))
    }
}

impl Backend for ReplayBackend {
    fn begin_dialogue(&self, run_index: usize) -> Box<dyn DialogueSession + '_> {
        let entries = self
            .transcript
            .runs
            .get(run_index)
            .map(|r| r.as_slice())
            .unwrap_or(&[]);
        Box::new(ReplaySession { entries, cursor: 0 })
    }

    fn metadata(&self) -> BackendMetadata {
        self.transcript.metadata.clone()
    }
}

struct ReplaySession<'a> {
    entries: &'a [TranscriptEntry],
    cursor: usize,
}

impl DialogueSession for ReplaySession<'_> {
    fn request(
        &mut self,
        history: &[ChatMessage],
        schemas: &[FunctionSchema],
        allow_tools: bool,
    ) -> Result<BackendReply, BackendError> {
        let entry = self.entries.get(self.cursor).ok_or_else(|| {
            BackendError::ScriptExhausted(format!(
                "transcript run ended after {} entries",
                self.cursor
            ))
        })?;
        let actual = request_fingerprint(history, schemas, allow_tools);
        if actual != entry.fingerprint {
            return Err(BackendError::FingerprintMismatch {
                index: self.cursor,
                expected: entry.fingerprint.clone(),
                actual,
            });
        }
        self.cursor += 1;
        Ok(entry.reply.clone())
    }
}
