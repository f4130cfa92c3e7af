//! Repository snapshot: the self-contained index of methods, docs, and
//! per-failing-test coverage that the rest of the pipeline reads.
//!
//! A snapshot is loaded from a single JSON document (see
//! `docs/snapshot_format.md` at the repository root) and is immutable after
//! load, so it can be shared across concurrent runs. Lookups used by the
//! tool server and the aggregator live here:
//!
//! * [`RepoSnapshot::covered_classes`] — classes touched by one failing test
//! * [`RepoSnapshot::covered_methods`] — covered methods of one class, in
//!   source-line order
//! * [`RepoSnapshot::resolve_signature`] — the match cascade for free-form
//!   signature queries (exact, then class+name, then name only)

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signature::{MethodSignature, SignatureQuery};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

/// How statement boundaries are found when minimizing test snippets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementStyle {
    /// Curly-brace languages (Java, C-family): statements end with `;` or `}`.
    Brace,
    /// Indentation languages (Python): blocks are deeper-indented line runs.
    Indent,
}

/// Names treated as assertions when pruning passed assertions from a test
/// snippet. A statement counts as an assertion when its first token or first
/// called identifier matches a prefix or an exact name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionRules {
    pub prefixes: Vec<String>,
    pub names: Vec<String>,
}

impl Default for AssertionRules {
    fn default() -> Self {
        Self {
            prefixes: vec!["assert".to_string()],
            names: vec!["fail".to_string(), "verify".to_string()],
        }
    }
}

impl AssertionRules {
    pub fn matches(&self, identifier: &str) -> bool {
        self.prefixes.iter().any(|p| identifier.starts_with(p.as_str()))
            || self.names.iter().any(|n| n == identifier)
    }
}

/// One source line with its absolute line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLine {
    pub number: u32,
    pub text: String,
}

impl SourceLine {
    pub fn new(number: u32, text: impl Into<String>) -> Self {
        Self {
            number,
            text: text.into(),
        }
    }
}

/// One stack frame: its rendered location and whether it belongs to the
/// target repository (frames outside the repository are dropped during
/// minimization).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackFrame {
    pub text: String,
    pub in_target_repo: bool,
}

impl StackFrame {
    pub fn repo(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            in_target_repo: true,
        }
    }

    pub fn external(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            in_target_repo: false,
        }
    }
}

/// A method known to the snapshot: identity, body with absolute line span,
/// optional documentation, and the failing tests that cover it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodRecord {
    pub signature: MethodSignature,
    pub class_name: String,
    pub start_line: u32,
    pub end_line: u32,
    pub body: String,
    pub doc: Option<String>,
    pub is_covered_by: BTreeSet<String>,
}

impl MethodRecord {
    /// Body rendered one line at a time with absolute numbers, `NNN : text`.
    pub fn numbered_body(&self) -> String {
        self.body
            .lines()
            .enumerate()
            .map(|(i, text)| format!("{} : {}", self.start_line + i as u32, text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn is_covered(&self) -> bool {
        !self.is_covered_by.is_empty()
    }
}

/// One failing test: identity, numbered source, where it failed, and the
/// observed failure symptoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestFailure {
    pub test_id: String,
    pub test_source: Vec<SourceLine>,
    pub failure_line: u32,
    pub error_message: String,
    pub stack_frames: Vec<StackFrame>,
}

/// The immutable repository snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepoSnapshot {
    methods: Vec<MethodRecord>,
    classes: BTreeSet<String>,
    failures: Vec<TestFailure>,
    ground_truth: Option<BTreeSet<MethodSignature>>,
    language: String,
    statement_style: StatementStyle,
    assertion_rules: AssertionRules,
}

/// Errors from loading or validating a snapshot document.
#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("cannot read snapshot file: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("format error in `{field}`: {message}")]
    Format { field: String, message: String },
    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn format_err(field: impl Into<String>, message: impl Into<String>) -> SnapshotError {
    SnapshotError::Format {
        field: field.into(),
        message: message.into(),
    }
}

fn validation_err(field: impl Into<String>, message: impl Into<String>) -> SnapshotError {
    SnapshotError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

/// Lookup failures for snapshot queries.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum LookupError {
    #[error("unknown failing test `{0}`")]
    UnknownTest(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

/// Outcome of the signature resolution cascade.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution<'a> {
    /// The cascade produced a single method.
    ExactlyOne(&'a MethodRecord),
    /// Several methods matched at the first cascade level that hit; the
    /// candidates are canonical renderings in source order.
    Ambiguous(Vec<String>),
    /// No cascade level matched.
    None,
}

// ---------------------------------------------------------------------------
// Wire document
// ---------------------------------------------------------------------------

/// Serialized form of a snapshot. Field names here are the on-disk contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotDoc {
    pub format_version: u32,
    /// Code-fence language tag used when rendering the test snippet.
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default = "default_statement_style")]
    pub statement_style: StatementStyle,
    /// When true, dotted qualifiers are stripped from class segments at load.
    #[serde(default)]
    pub simple_names: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assertion_names: Option<AssertionRules>,
    pub methods: Vec<MethodDoc>,
    pub failures: Vec<FailureDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<String>>,
}

fn default_language() -> String {
    "java".to_string()
}

fn default_statement_style() -> StatementStyle {
    StatementStyle::Brace
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodDoc {
    pub signature: String,
    pub class: String,
    pub start_line: u32,
    pub end_line: u32,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<String>,
    #[serde(default)]
    pub covering_tests: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureDoc {
    pub test_id: String,
    /// Absolute number of the first line in `lines`.
    pub start_line: u32,
    pub lines: Vec<String>,
    pub failure_line: u32,
    #[serde(default)]
    pub error_message: String,
    #[serde(default)]
    pub stack_frames: Vec<StackFrameDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackFrameDoc {
    pub text: String,
    pub in_target_repo: bool,
}

// ---------------------------------------------------------------------------
// Loading and validation
// ---------------------------------------------------------------------------

/// Loads and validates a snapshot file.
pub fn load_snapshot(path: &Path) -> Result<RepoSnapshot, SnapshotError> {
    let text = std::fs::read_to_string(path)?;
    load_snapshot_str(&text)
}

/// Same as [`load_snapshot`] but over an in-memory document.
pub fn load_snapshot_str(text: &str) -> Result<RepoSnapshot, SnapshotError> {
    let doc: SnapshotDoc = serde_json::from_str(text)?;
    RepoSnapshot::from_doc(doc)
}

impl RepoSnapshot {
    pub fn from_doc(doc: SnapshotDoc) -> Result<Self, SnapshotError> {
        if doc.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(format_err(
                "format_version",
                format!(
                    "unsupported version {} (expected {})",
                    doc.format_version, SNAPSHOT_FORMAT_VERSION
                ),
            ));
        }

        let mut failures = Vec::with_capacity(doc.failures.len());
        let mut failure_ids = BTreeSet::new();
        for (i, f) in doc.failures.iter().enumerate() {
            let field = format!("failures[{i}]");
            if f.test_id.trim().is_empty() {
                return Err(format_err(format!("{field}.test_id"), "must be non-empty"));
            }
            if !failure_ids.insert(f.test_id.clone()) {
                return Err(validation_err(
                    format!("{field}.test_id"),
                    format!("duplicate failing test `{}`", f.test_id),
                ));
            }
            if f.lines.is_empty() {
                return Err(format_err(format!("{field}.lines"), "must be non-empty"));
            }
            let last_line = f.start_line + (f.lines.len() as u32 - 1);
            if f.failure_line < f.start_line || f.failure_line > last_line {
                return Err(validation_err(
                    format!("{field}.failure_line"),
                    format!(
                        "line {} outside test source span {}..={}",
                        f.failure_line, f.start_line, last_line
                    ),
                ));
            }
            if f.stack_frames.is_empty() && f.error_message.trim().is_empty() {
                return Err(validation_err(
                    format!("{field}.error_message"),
                    "a failure needs at least one stack frame or a non-empty error message",
                ));
            }
            failures.push(TestFailure {
                test_id: f.test_id.clone(),
                test_source: f
                    .lines
                    .iter()
                    .enumerate()
                    .map(|(j, text)| SourceLine::new(f.start_line + j as u32, text.clone()))
                    .collect(),
                failure_line: f.failure_line,
                error_message: f.error_message.clone(),
                stack_frames: f
                    .stack_frames
                    .iter()
                    .map(|s| StackFrame {
                        text: s.text.clone(),
                        in_target_repo: s.in_target_repo,
                    })
                    .collect(),
            });
        }

        let mut methods = Vec::with_capacity(doc.methods.len());
        let mut seen_signatures = BTreeSet::new();
        for (i, m) in doc.methods.iter().enumerate() {
            let field = format!("methods[{i}]");
            let mut signature = MethodSignature::parse_canonical(&m.signature).ok_or_else(|| {
                format_err(
                    format!("{field}.signature"),
                    format!(
                        "`{}` is not in ClassName.MethodName(ArgType1, ArgType2, ...) form",
                        m.signature
                    ),
                )
            })?;
            let mut class_name = m.class.clone();
            if doc.simple_names {
                signature = signature.with_simple_class_name();
                if let Some(last) = class_name.rsplit('.').next() {
                    class_name = last.to_string();
                }
            }
            if signature.class_name != class_name {
                return Err(validation_err(
                    format!("{field}.class"),
                    format!(
                        "method `{}` references unknown class (signature names `{}`, record names `{}`)",
                        signature.canonical(),
                        signature.class_name,
                        class_name
                    ),
                ));
            }
            if m.start_line < 1 || m.start_line > m.end_line {
                return Err(validation_err(
                    format!("{field}.start_line"),
                    format!("need 1 <= start_line <= end_line, got {}..{}", m.start_line, m.end_line),
                ));
            }
            let body = m.body.strip_suffix('\n').unwrap_or(&m.body).to_string();
            let body_lines = body.lines().count() as u32;
            let span = m.end_line - m.start_line + 1;
            if body_lines != span {
                return Err(validation_err(
                    format!("{field}.body"),
                    format!("body has {body_lines} lines but the span {}..{} covers {span}", m.start_line, m.end_line),
                ));
            }
            if !seen_signatures.insert(signature.clone()) {
                return Err(validation_err(
                    format!("{field}.signature"),
                    format!("duplicate signature `{}`", signature.canonical()),
                ));
            }
            for t in &m.covering_tests {
                if !failure_ids.contains(t) {
                    return Err(validation_err(
                        format!("{field}.covering_tests"),
                        format!("references unknown failing test `{t}`"),
                    ));
                }
            }
            methods.push(MethodRecord {
                signature,
                class_name,
                start_line: m.start_line,
                end_line: m.end_line,
                body,
                doc: m.doc.clone(),
                is_covered_by: m.covering_tests.iter().cloned().collect(),
            });
        }

        let classes: BTreeSet<String> = methods.iter().map(|m| m.class_name.clone()).collect();

        let ground_truth = match &doc.ground_truth {
            None => None,
            Some(entries) => {
                let mut set = BTreeSet::new();
                for (i, s) in entries.iter().enumerate() {
                    let mut sig = MethodSignature::parse_canonical(s).ok_or_else(|| {
                        format_err(
                            format!("ground_truth[{i}]"),
                            format!("`{s}` is not a canonical signature"),
                        )
                    })?;
                    if doc.simple_names {
                        sig = sig.with_simple_class_name();
                    }
                    set.insert(sig);
                }
                Some(set)
            }
        };

        Ok(Self {
            methods,
            classes,
            failures,
            ground_truth,
            language: doc.language,
            statement_style: doc.statement_style,
            assertion_rules: doc.assertion_names.unwrap_or_default(),
        })
    }

    /// Re-serializes the snapshot to its document form. Round-trips with
    /// [`RepoSnapshot::from_doc`].
    pub fn to_doc(&self) -> SnapshotDoc {
        SnapshotDoc {
            format_version: SNAPSHOT_FORMAT_VERSION,
            language: self.language.clone(),
            statement_style: self.statement_style,
            simple_names: false,
            assertion_names: Some(self.assertion_rules.clone()),
            methods: self
                .methods
                .iter()
                .map(|m| MethodDoc {
                    signature: m.signature.canonical(),
                    class: m.class_name.clone(),
                    start_line: m.start_line,
                    end_line: m.end_line,
                    body: m.body.clone(),
                    doc: m.doc.clone(),
                    covering_tests: m.is_covered_by.iter().cloned().collect(),
                })
                .collect(),
            failures: self
                .failures
                .iter()
                .map(|f| FailureDoc {
                    test_id: f.test_id.clone(),
                    start_line: f.test_source.first().map(|l| l.number).unwrap_or(1),
                    lines: f.test_source.iter().map(|l| l.text.clone()).collect(),
                    failure_line: f.failure_line,
                    error_message: f.error_message.clone(),
                    stack_frames: f
                        .stack_frames
                        .iter()
                        .map(|s| StackFrameDoc {
                            text: s.text.clone(),
                            in_target_repo: s.in_target_repo,
                        })
                        .collect(),
                })
                .collect(),
            ground_truth: self
                .ground_truth
                .as_ref()
                .map(|set| set.iter().map(|s| s.canonical()).collect()),
        }
    }

    // -- accessors ----------------------------------------------------------

    pub fn methods(&self) -> &[MethodRecord] {
        &self.methods
    }

    pub fn classes(&self) -> &BTreeSet<String> {
        &self.classes
    }

    pub fn failures(&self) -> &[TestFailure] {
        &self.failures
    }

    pub fn ground_truth(&self) -> Option<&BTreeSet<MethodSignature>> {
        self.ground_truth.as_ref()
    }

    /// Code-fence tag for prompt rendering (`java`, `python`, ...).
    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn statement_style(&self) -> StatementStyle {
        self.statement_style
    }

    pub fn assertion_rules(&self) -> &AssertionRules {
        &self.assertion_rules
    }

    pub fn failure(&self, test_id: &str) -> Option<&TestFailure> {
        self.failures.iter().find(|f| f.test_id == test_id)
    }

    pub fn method(&self, signature: &MethodSignature) -> Option<&MethodRecord> {
        self.methods.iter().find(|m| &m.signature == signature)
    }

    /// Ground-truth signatures that do not correspond to any method record
    /// (omission bugs or producer mistakes); reported as warnings, never
    /// errors.
    pub fn unresolved_ground_truth(&self) -> Vec<MethodSignature> {
        match &self.ground_truth {
            None => Vec::new(),
            Some(set) => set
                .iter()
                .filter(|sig| self.method(sig).is_none())
                .cloned()
                .collect(),
        }
    }

    // -- lookups ------------------------------------------------------------

    /// Classes with at least one method covered by `test_id`, sorted.
    pub fn covered_classes(&self, test_id: &str) -> Result<Vec<String>, LookupError> {
        if self.failure(test_id).is_none() {
            return Err(LookupError::UnknownTest(test_id.to_string()));
        }
        let set: BTreeSet<String> = self
            .methods
            .iter()
            .filter(|m| m.is_covered_by.contains(test_id))
            .map(|m| m.class_name.clone())
            .collect();
        Ok(set.into_iter().collect())
    }

    /// Signatures of methods in `class_name` covered by at least one failing
    /// test, in source-line order.
    pub fn covered_methods(&self, class_name: &str) -> Result<Vec<MethodSignature>, LookupError> {
        if !self.classes.contains(class_name) {
            return Err(LookupError::UnknownClass(class_name.to_string()));
        }
        let mut records: Vec<&MethodRecord> = self
            .methods
            .iter()
            .filter(|m| m.class_name == class_name && m.is_covered())
            .collect();
        records.sort_by(source_order);
        Ok(records.iter().map(|m| m.signature.clone()).collect())
    }

    /// Resolves a free-form query through the match cascade:
    /// exact (class, method, args) first, then (class, method), then method
    /// name alone. The first level with any hit decides the outcome.
    pub fn resolve_signature(&self, query: &str) -> Resolution<'_> {
        let parsed = match SignatureQuery::parse(query) {
            Some(q) => q,
            None => return Resolution::None,
        };

        if parsed.is_fully_specified() {
            let hits = self.collect_matches(|m| {
                m.signature.class_name == *parsed.class_name.as_ref().unwrap()
                    && m.signature.method_name == parsed.method_name
                    && Some(&m.signature.arg_types) == parsed.arg_types.as_ref()
            });
            match hits.len() {
                0 => {}
                1 => return Resolution::ExactlyOne(hits[0]),
                _ => return ambiguous(hits),
            }
        }

        if let Some(class) = &parsed.class_name {
            let hits = self.collect_matches(|m| {
                m.signature.class_name == *class && m.signature.method_name == parsed.method_name
            });
            match hits.len() {
                0 => {}
                1 => return Resolution::ExactlyOne(hits[0]),
                _ => return ambiguous(hits),
            }
        }

        let hits = self.collect_matches(|m| m.signature.method_name == parsed.method_name);
        match hits.len() {
            0 => Resolution::None,
            1 => Resolution::ExactlyOne(hits[0]),
            _ => ambiguous(hits),
        }
    }

    fn collect_matches<F: Fn(&MethodRecord) -> bool>(&self, pred: F) -> Vec<&MethodRecord> {
        let mut hits: Vec<&MethodRecord> = self.methods.iter().filter(|m| pred(m)).collect();
        hits.sort_by(source_order);
        hits
    }
}

/// Deterministic source order: class, then start line, then canonical text.
/// Used wherever the list order is otherwise unspecified.
pub fn source_order(a: &&MethodRecord, b: &&MethodRecord) -> std::cmp::Ordering {
    (&a.class_name, a.start_line, a.signature.canonical()).cmp(&(
        &b.class_name,
        b.start_line,
        b.signature.canonical(),
    ))
}

fn ambiguous<'a>(hits: Vec<&'a MethodRecord>) -> Resolution<'a> {
    Resolution::Ambiguous(hits.iter().map(|m| m.signature.canonical()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_doc() -> SnapshotDoc {
        serde_json::from_value(serde_json::json!({
            "format_version": 1,
            "language": "java",
            "methods": [
                {
                    "signature": "Widget.run()",
                    "class": "Widget",
                    "start_line": 10,
                    "end_line": 11,
                    "body": "void run() {\n}",
                    "covering_tests": ["WidgetTest.testRun()"]
                }
            ],
            "failures": [
                {
                    "test_id": "WidgetTest.testRun()",
                    "start_line": 5,
                    "lines": ["void testRun() {", "    run();", "}"],
                    "failure_line": 6,
                    "error_message": "boom"
                }
            ]
        }))
        .unwrap()
    }

    #[test]
    fn loads_minimal_snapshot() {
        let snap = RepoSnapshot::from_doc(minimal_doc()).unwrap();
        assert_eq!(snap.methods().len(), 1);
        assert_eq!(snap.classes().len(), 1);
        assert_eq!(snap.failures().len(), 1);
    }

    #[test]
    fn rejects_class_mismatch() {
        let mut doc = minimal_doc();
        doc.methods[0].class = "Gadget".to_string();
        let err = RepoSnapshot::from_doc(doc).unwrap_err();
        match err {
            SnapshotError::Validation { field, .. } => assert_eq!(field, "methods[0].class"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_covering_test() {
        let mut doc = minimal_doc();
        doc.methods[0].covering_tests = vec!["Nope.test()".to_string()];
        let err = RepoSnapshot::from_doc(doc).unwrap_err();
        match err {
            SnapshotError::Validation { field, .. } => {
                assert_eq!(field, "methods[0].covering_tests")
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_failure_line_outside_source() {
        let mut doc = minimal_doc();
        doc.failures[0].failure_line = 99;
        assert!(matches!(
            RepoSnapshot::from_doc(doc),
            Err(SnapshotError::Validation { .. })
        ));
    }

    #[test]
    fn rejects_body_span_mismatch() {
        let mut doc = minimal_doc();
        doc.methods[0].end_line = 15;
        assert!(matches!(
            RepoSnapshot::from_doc(doc),
            Err(SnapshotError::Validation { .. })
        ));
    }

    #[test]
    fn covered_classes_unknown_test_is_lookup_error() {
        let snap = RepoSnapshot::from_doc(minimal_doc()).unwrap();
        assert_eq!(
            snap.covered_classes("nope"),
            Err(LookupError::UnknownTest("nope".to_string()))
        );
    }

    #[test]
    fn numbered_body_uses_absolute_lines() {
        let snap = RepoSnapshot::from_doc(minimal_doc()).unwrap();
        let body = snap.methods()[0].numbered_body();
        assert_eq!(body, "10 : void run() {\n11 : }");
    }

    #[test]
    fn simple_names_mode_strips_qualifiers() {
        let mut doc = minimal_doc();
        doc.simple_names = true;
        doc.methods[0].signature = "org.example.Widget.run()".to_string();
        doc.methods[0].class = "org.example.Widget".to_string();
        let snap = RepoSnapshot::from_doc(doc).unwrap();
        assert_eq!(snap.methods()[0].signature.class_name, "Widget");
        assert!(snap.classes().contains("Widget"));
    }

    #[test]
    fn ground_truth_may_reference_unknown_methods() {
        let mut doc = minimal_doc();
        doc.ground_truth = Some(vec!["Missing.gone()".to_string()]);
        let snap = RepoSnapshot::from_doc(doc).unwrap();
        assert_eq!(snap.unresolved_ground_truth().len(), 1);
    }

    #[test]
    fn doc_round_trip() {
        let snap = RepoSnapshot::from_doc(minimal_doc()).unwrap();
        let reloaded = RepoSnapshot::from_doc(snap.to_doc()).unwrap();
        assert_eq!(snap, reloaded);
    }
}
