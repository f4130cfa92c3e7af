//! The four debugging functions exposed to the LLM, plus per-call logging.
//!
//! Dispatch never fails: invalid input produces a guidance message that goes
//! back into the dialogue, and every call yields exactly one
//! [`FunctionCallLogEntry`]. Responses are plain text because they re-enter
//! the LLM context; overly long responses are truncated at a configurable
//! byte cap.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::signature::MethodSignature;
use crate::snapshot::{RepoSnapshot, Resolution};

pub const FN_COVERED_CLASSES: &str = "get_failing_tests_covered_classes";
pub const FN_COVERED_METHODS: &str = "get_failing_tests_covered_methods";
pub const FN_CODE_SNIPPET: &str = "get_code_snippet";
pub const FN_COMMENTS: &str = "get_comments";

pub const GUIDANCE_MULTIPLE_MATCHES: &str =
    "There are multiple matches to that query. Do you mean any of the following:";

const DEFAULT_RESPONSE_BYTE_CAP: usize = 8192;
const TRUNCATION_MARKER: &str = "\n... (truncated)";

/// Machine-readable description of one callable function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSchema {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub description: String,
}

/// The fixed set of four debugging functions.
pub fn function_schemas() -> Vec<FunctionSchema> {
    vec![
        FunctionSchema {
            name: FN_COVERED_CLASSES.to_string(),
            description:
                "Returns the names of the classes covered by the failing test, as a JSON list."
                    .to_string(),
            parameters: vec![],
        },
        FunctionSchema {
            name: FN_COVERED_METHODS.to_string(),
            description: "Returns the signatures of the methods of the given class that are covered by failing tests, as a JSON list.".to_string(),
            parameters: vec![ParamSpec {
                name: "class_name".to_string(),
                description: "Name of the class to list covered methods for.".to_string(),
            }],
        },
        FunctionSchema {
            name: FN_CODE_SNIPPET.to_string(),
            description:
                "Returns the source code of the method matching the given signature, with line numbers."
                    .to_string(),
            parameters: vec![ParamSpec {
                name: "signature".to_string(),
                description:
                    "Method signature in ClassName.MethodName(ArgType1, ArgType2, ...) format."
                        .to_string(),
            }],
        },
        FunctionSchema {
            name: FN_COMMENTS.to_string(),
            description: "Returns the documentation of the method matching the given signature."
                .to_string(),
            parameters: vec![ParamSpec {
                name: "signature".to_string(),
                description:
                    "Method signature in ClassName.MethodName(ArgType1, ArgType2, ...) format."
                        .to_string(),
            }],
        },
    ]
}

/// How a dispatched call went.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    /// The call succeeded and returned real data.
    Ok,
    /// The call was invalid; the response is a guidance message.
    Guidance,
    /// The function name itself was not one of the four.
    Error,
}

/// One logged function interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionCallLogEntry {
    pub run_id: String,
    pub step: usize,
    pub function: String,
    pub raw_args: String,
    pub outcome: CallOutcome,
    pub response: String,
    /// Methods named (canonically or resolvably) in the arguments or the
    /// response; feeds the mention-frequency tiebreak during ranking.
    pub mentioned_signatures: BTreeSet<MethodSignature>,
}

/// Serves the four functions for one run over one failing test.
pub struct ToolServer<'a> {
    snapshot: &'a RepoSnapshot,
    test_id: String,
    run_id: String,
    next_step: usize,
    response_byte_cap: usize,
}

impl<'a> ToolServer<'a> {
    pub fn new(snapshot: &'a RepoSnapshot, test_id: &str, run_id: &str) -> Self {
        Self {
            snapshot,
            test_id: test_id.to_string(),
            run_id: run_id.to_string(),
            next_step: 0,
            response_byte_cap: DEFAULT_RESPONSE_BYTE_CAP,
        }
    }

    pub fn with_response_cap(mut self, cap: usize) -> Self {
        self.response_byte_cap = cap.max(TRUNCATION_MARKER.len() + 1);
        self
    }

    /// Runs one function call and logs it. Never fails; invalid calls come
    /// back as guidance text.
    pub fn dispatch(&mut self, name: &str, raw_args: &str) -> FunctionCallLogEntry {
        let (outcome, response) = match name {
            FN_COVERED_CLASSES => self.covered_classes(),
            FN_COVERED_METHODS => self.covered_methods(raw_args),
            FN_CODE_SNIPPET => self.method_lookup(raw_args, |m| m.numbered_body()),
            FN_COMMENTS => self.method_lookup(raw_args, |m| match &m.doc {
                Some(doc) if !doc.trim().is_empty() => doc.clone(),
                _ => format!(
                    "No documentation available for `{}`.",
                    m.signature.canonical()
                ),
            }),
            other => (
                CallOutcome::Error,
                format!(
                    "Unknown function \"{other}\". Available functions are: {FN_COVERED_CLASSES}, {FN_COVERED_METHODS}, {FN_CODE_SNIPPET}, {FN_COMMENTS}."
                ),
            ),
        };

        let response = self.truncate(response);
        let mut mentioned = extract_mentions(self.snapshot, raw_args);
        mentioned.extend(extract_mentions(self.snapshot, &response));

        let entry = FunctionCallLogEntry {
            run_id: self.run_id.clone(),
            step: self.next_step,
            function: name.to_string(),
            raw_args: raw_args.to_string(),
            outcome,
            response,
            mentioned_signatures: mentioned,
        };
        self.next_step += 1;
        entry
    }

    fn covered_classes(&self) -> (CallOutcome, String) {
        match self.snapshot.covered_classes(&self.test_id) {
            Ok(classes) => (CallOutcome::Ok, json_list(&classes)),
            Err(e) => (CallOutcome::Guidance, format!("{e}.")),
        }
    }

    fn covered_methods(&self, raw_args: &str) -> (CallOutcome, String) {
        let Some(class_name) = extract_arg(raw_args, "class_name") else {
            return (
                CallOutcome::Guidance,
                format!(
                    "The {FN_COVERED_METHODS} function requires a \"class_name\" argument, e.g. {{\"class_name\": \"SomeClass\"}}."
                ),
            );
        };
        match self.snapshot.covered_methods(&class_name) {
            Ok(methods) => {
                let rendered: Vec<String> = methods.iter().map(|s| s.canonical()).collect();
                (CallOutcome::Ok, json_list(&rendered))
            }
            Err(_) => {
                let known = self
                    .snapshot
                    .covered_classes(&self.test_id)
                    .unwrap_or_default();
                (
                    CallOutcome::Guidance,
                    format!(
                        "No class named \"{class_name}\" is covered by the failing test. Covered classes are: {}.",
                        json_list(&known)
                    ),
                )
            }
        }
    }

    fn method_lookup<F>(&self, raw_args: &str, render: F) -> (CallOutcome, String)
    where
        F: Fn(&crate::snapshot::MethodRecord) -> String,
    {
        let Some(query) = extract_arg(raw_args, "signature") else {
            return (
                CallOutcome::Guidance,
                "This function requires a \"signature\" argument in `ClassName.MethodName(ArgType1, ArgType2, ...)` format, e.g. {\"signature\": \"SomeClass.someMethod(int)\"}.".to_string(),
            );
        };
        match self.snapshot.resolve_signature(&query) {
            Resolution::ExactlyOne(record) => (CallOutcome::Ok, render(record)),
            Resolution::Ambiguous(candidates) => (
                CallOutcome::Guidance,
                format!("{GUIDANCE_MULTIPLE_MATCHES} {}?", candidates.join(", ")),
            ),
            Resolution::None => (
                CallOutcome::Guidance,
                format!(
                    "No method matching \"{query}\" was found. Call {FN_COVERED_CLASSES} and {FN_COVERED_METHODS} to discover valid signatures."
                ),
            ),
        }
    }

    fn truncate(&self, response: String) -> String {
        if response.len() <= self.response_byte_cap {
            return response;
        }
        let budget = self.response_byte_cap - TRUNCATION_MARKER.len();
        let mut cut = budget;
        while !response.is_char_boundary(cut) {
            cut -= 1;
        }
        format!("{}{}", &response[..cut], TRUNCATION_MARKER)
    }
}

fn json_list(items: &[String]) -> String {
    serde_json::to_string(items).expect("string list always serializes")
}

/// Pulls a named string argument out of the raw argument payload. Accepts a
/// JSON object, a bare JSON string, or (leniently) the raw text itself.
fn extract_arg(raw_args: &str, name: &str) -> Option<String> {
    let trimmed = raw_args.trim();
    if trimmed.is_empty() {
        return None;
    }
    match serde_json::from_str::<serde_json::Value>(trimmed) {
        Ok(serde_json::Value::Object(map)) => map
            .get(name)
            .and_then(|v| v.as_str())
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string),
        Ok(serde_json::Value::String(s)) => {
            let s = s.trim();
            (!s.is_empty()).then(|| s.to_string())
        }
        Ok(_) => None,
        Err(_) => Some(trimmed.to_string()),
    }
}

/// Finds methods mentioned in a text. Candidates are dotted identifiers with
/// an optional argument list, or bare identifiers immediately followed by an
/// argument list; each candidate is resolved through the signature cascade
/// and only unambiguous hits count.
pub fn extract_mentions(snapshot: &RepoSnapshot, text: &str) -> BTreeSet<MethodSignature> {
    static CANDIDATE: OnceLock<Regex> = OnceLock::new();
    let re = CANDIDATE.get_or_init(|| {
        Regex::new(
            r"[A-Za-z_$][A-Za-z0-9_$]*(?:\.[A-Za-z_$][A-Za-z0-9_$]*)+(?:\([^()]*\))?|[A-Za-z_$][A-Za-z0-9_$]*\([^()]*\)",
        )
        .expect("static regex compiles")
    });
    let mut out = BTreeSet::new();
    for hit in re.find_iter(text) {
        if let Resolution::ExactlyOne(record) = snapshot.resolve_signature(hit.as_str()) {
            out.insert(record.signature.clone());
        }
    }
    out
}
