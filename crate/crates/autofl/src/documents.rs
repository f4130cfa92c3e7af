//! On-disk documents: run sets, reports, boost sidecars, and ground-truth
//! files. All are JSON with stable key ordering so identical inputs produce
//! byte-identical outputs; no timestamps are embedded anywhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregate::{BoostSource, BoostVector, FLReport};
use crate::backend::BackendMetadata;
use crate::orchestrator::{RunConfig, RunRecord, RunStatus};
use crate::signature::MethodSignature;
use crate::tools::{CallOutcome, FunctionCallLogEntry};

pub const DOCUMENT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("`{0}` is not a canonical method signature")]
    BadSignature(String),
}

/// SHA-256 of a snapshot file's bytes; identifies which snapshot a run set
/// was produced from.
pub fn snapshot_identity(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    crate::backend::hex_string(&hasher.finalize())
}

// ---------------------------------------------------------------------------
// Run sets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSetDoc {
    pub format_version: u32,
    pub bug_id: String,
    pub snapshot_sha256: String,
    pub config: RunConfig,
    pub backend: BackendMetadata,
    pub records: Vec<RunRecordDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecordDoc {
    pub run_id: String,
    pub test_id: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    pub predicted: Vec<String>,
    pub raw_answer_lines: Vec<String>,
    pub function_log: Vec<LogEntryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEntryDoc {
    pub step: usize,
    pub function: String,
    pub raw_args: String,
    pub outcome: CallOutcome,
    pub response: String,
    pub mentioned_signatures: Vec<String>,
}

impl RunSetDoc {
    pub fn from_records(
        bug_id: &str,
        snapshot_sha256: &str,
        config: &RunConfig,
        backend: BackendMetadata,
        records: &[RunRecord],
    ) -> Self {
        Self {
            format_version: DOCUMENT_FORMAT_VERSION,
            bug_id: bug_id.to_string(),
            snapshot_sha256: snapshot_sha256.to_string(),
            config: *config,
            backend,
            records: records.iter().map(RunRecordDoc::from_record).collect(),
        }
    }

    pub fn to_records(&self) -> Result<Vec<RunRecord>, DocumentError> {
        self.records.iter().map(RunRecordDoc::to_record).collect()
    }
}

impl RunRecordDoc {
    pub fn from_record(record: &RunRecord) -> Self {
        Self {
            run_id: record.run_id.clone(),
            test_id: record.test_id.clone(),
            status: record.status,
            explanation: record.explanation.clone(),
            predicted: record.predicted.iter().map(|s| s.canonical()).collect(),
            raw_answer_lines: record.raw_answer_lines.clone(),
            function_log: record
                .function_log
                .iter()
                .map(|entry| LogEntryDoc {
                    step: entry.step,
                    function: entry.function.clone(),
                    raw_args: entry.raw_args.clone(),
                    outcome: entry.outcome,
                    response: entry.response.clone(),
                    mentioned_signatures: entry
                        .mentioned_signatures
                        .iter()
                        .map(|s| s.canonical())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_record(&self) -> Result<RunRecord, DocumentError> {
        let parse = |text: &String| {
            MethodSignature::parse_canonical(text)
                .ok_or_else(|| DocumentError::BadSignature(text.clone()))
        };
        Ok(RunRecord {
            run_id: self.run_id.clone(),
            test_id: self.test_id.clone(),
            explanation: self.explanation.clone(),
            predicted: self
                .predicted
                .iter()
                .map(parse)
                .collect::<Result<_, _>>()?,
            raw_answer_lines: self.raw_answer_lines.clone(),
            status: self.status,
            function_log: self
                .function_log
                .iter()
                .map(|entry| {
                    Ok(FunctionCallLogEntry {
                        run_id: self.run_id.clone(),
                        step: entry.step,
                        function: entry.function.clone(),
                        raw_args: entry.raw_args.clone(),
                        outcome: entry.outcome,
                        response: entry.response.clone(),
                        mentioned_signatures: entry
                            .mentioned_signatures
                            .iter()
                            .map(parse)
                            .collect::<Result<_, _>>()?,
                    })
                })
                .collect::<Result<_, _>>()?,
        })
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FLReportDoc {
    pub format_version: u32,
    pub bug_id: String,
    pub snapshot_sha256: String,
    pub config: RunConfig,
    pub backend: BackendMetadata,
    pub ranked: Vec<RankedEntryDoc>,
    pub confidence: f64,
    pub run_ids: Vec<String>,
    pub boost_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedEntryDoc {
    pub signature: String,
    pub score: f64,
    pub provenance: crate::aggregate::Provenance,
    pub covered: bool,
}

impl FLReportDoc {
    pub fn from_report(
        bug_id: &str,
        snapshot_sha256: &str,
        config: &RunConfig,
        backend: BackendMetadata,
        report: &FLReport,
    ) -> Self {
        Self {
            format_version: DOCUMENT_FORMAT_VERSION,
            bug_id: bug_id.to_string(),
            snapshot_sha256: snapshot_sha256.to_string(),
            config: *config,
            backend,
            ranked: report
                .ranked
                .iter()
                .map(|entry| RankedEntryDoc {
                    signature: entry.signature.canonical(),
                    score: entry.score,
                    provenance: entry.provenance,
                    covered: entry.covered,
                })
                .collect(),
            confidence: report.confidence,
            run_ids: report.run_ids.clone(),
            boost_applied: report.boost_applied,
        }
    }

    pub fn ranked_signatures(&self) -> Result<Vec<MethodSignature>, DocumentError> {
        self.ranked
            .iter()
            .map(|entry| {
                MethodSignature::parse_canonical(&entry.signature)
                    .ok_or_else(|| DocumentError::BadSignature(entry.signature.clone()))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Boost sidecars and ground truth
// ---------------------------------------------------------------------------

/// Boost sidecar for one campaign: values keyed by run id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostDoc {
    pub source: BoostSource,
    pub values: BTreeMap<String, f64>,
}

impl BoostDoc {
    /// Aligns the keyed values with the campaign's run order. Runs without
    /// an entry get a zero boost.
    pub fn to_vector(&self, run_ids: &[String]) -> BoostVector {
        BoostVector {
            source: self.source,
            values: run_ids
                .iter()
                .map(|id| self.values.get(id).copied().unwrap_or(0.0))
                .collect(),
        }
    }
}

/// Boost sidecars for a whole evaluation, keyed by bug id.
pub type EvalBoostDoc = BTreeMap<String, BoostDoc>;

/// Ground truth for a whole evaluation: bug id to canonical signatures.
pub type TruthDoc = BTreeMap<String, Vec<String>>;

// ---------------------------------------------------------------------------
// IO helpers
// ---------------------------------------------------------------------------

pub fn read_json<T: for<'de> Deserialize<'de>>(
    path: &std::path::Path,
) -> Result<T, DocumentError> {
    let text = std::fs::read_to_string(path).map_err(|source| DocumentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DocumentError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<(), DocumentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| DocumentError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| DocumentError::Io {
        path: path.display().to_string(),
        source,
    })
}
