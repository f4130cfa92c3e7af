//! Executes runs: seeds the dialogue, loops function interactions up to the
//! budget, captures the Stage-1 explanation, elicits the Stage-2 answer, and
//! records everything.
//!
//! The first covered-classes call is seeded by the harness itself (appended
//! as a function call plus its result before the model ever replies), so the
//! model keeps all `n_budget` interactions for itself. A campaign repeats
//! runs `r_runs` times, picking the failing test round-robin.

use serde::{Deserialize, Serialize};

use crate::backend::{complete, Backend, BackendError, ChatMessage, ReplyKind};
use crate::prompt::{baseline_user_text, build_stage1, PromptContext};
use crate::signature::MethodSignature;
use crate::snapshot::{RepoSnapshot, Resolution, TestFailure};
use crate::tools::{function_schemas, FunctionCallLogEntry, ToolServer, FN_COVERED_CLASSES};

/// Terser reformulation sent when the Stage-2 answer resolves no signatures.
pub const FORMAT_REMINDER: &str = "Your previous answer could not be processed. Reply with only the most likely culprit method signatures, one per line, in `ClassName.MethodName(ArgType1, ArgType2, ...)` format.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Run `k` uses failing test `k mod |failures|`.
    RoundRobin,
    /// Every run uses the first failing test.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Maximum number of model-initiated function interactions per run.
    pub n_budget: usize,
    /// Number of repeated runs whose predictions are aggregated.
    pub r_runs: usize,
    /// false = baseline mode: predict from the failing test alone.
    pub tools_enabled: bool,
    pub selection: SelectionPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_budget: 10,
            r_runs: 5,
            tools_enabled: true,
            selection: SelectionPolicy::RoundRobin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    LengthError,
    BudgetExhausted,
    ParseEmpty,
    TransportError,
}

/// Everything one run produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    pub run_id: String,
    pub test_id: String,
    /// Stage-1 final text; absent when Stage 1 was skipped (baseline mode),
    /// errored, or ran out of budget before concluding.
    pub explanation: Option<String>,
    pub predicted: Vec<MethodSignature>,
    pub raw_answer_lines: Vec<String>,
    pub status: RunStatus,
    pub function_log: Vec<FunctionCallLogEntry>,
}

/// Executes a single run against the given failing test.
pub fn run_once(
    snapshot: &RepoSnapshot,
    failure: &TestFailure,
    config: &RunConfig,
    backend: &dyn Backend,
) -> RunRecord {
    run_indexed(snapshot, failure, config, backend, 0)
}

/// Like [`run_once`] but with an explicit campaign run index (zero-based);
/// the index picks the backend dialogue script and names the record.
pub fn run_indexed(
    snapshot: &RepoSnapshot,
    failure: &TestFailure,
    config: &RunConfig,
    backend: &dyn Backend,
    run_index: usize,
) -> RunRecord {
    let run_id = format!("run-{}", run_index + 1);
    let bundle = build_stage1(
        &PromptContext::for_snapshot(snapshot),
        failure,
        config.n_budget,
    );
    let schemas = function_schemas();
    let mut session = backend.begin_dialogue(run_index);

    let mut history = vec![ChatMessage::system(&bundle.system_text)];
    let mut log: Vec<FunctionCallLogEntry> = Vec::new();
    let mut explanation: Option<String> = None;
    let mut fatal: Option<RunStatus> = None;
    let mut budget_exhausted = false;

    if config.tools_enabled {
        history.push(ChatMessage::user(&bundle.user_text));

        // Seeded first call: appended without asking the model, so it does
        // not consume the interaction budget.
        let mut tools = ToolServer::new(snapshot, &failure.test_id, &run_id);
        let seeded = tools.dispatch(FN_COVERED_CLASSES, "{}");
        history.push(ChatMessage::function_call(FN_COVERED_CLASSES, "{}"));
        history.push(ChatMessage::function_result(
            FN_COVERED_CLASSES,
            &seeded.response,
        ));
        log.push(seeded);

        let mut calls_made = 0;
        loop {
            if calls_made >= config.n_budget {
                budget_exhausted = true;
                break;
            }
            match complete(session.as_mut(), &history, &schemas, true) {
                Err(e) => {
                    fatal = Some(status_for(&e));
                    break;
                }
                Ok(reply) => match reply.kind {
                    ReplyKind::FinalText { content } => {
                        history.push(ChatMessage::assistant(&content));
                        explanation = Some(content);
                        break;
                    }
                    ReplyKind::FunctionCall { name, arguments } => {
                        history.push(ChatMessage::function_call(&name, &arguments));
                        let entry = tools.dispatch(&name, &arguments);
                        history.push(ChatMessage::function_result(&name, &entry.response));
                        log.push(entry);
                        calls_made += 1;
                    }
                },
            }
        }
    } else {
        history.push(ChatMessage::user(baseline_user_text(&bundle)));
    }

    let mut predicted: Vec<MethodSignature> = Vec::new();
    let mut raw_answer_lines: Vec<String> = Vec::new();

    if fatal.is_none() {
        history.push(ChatMessage::user(&bundle.stage2_text));
        match complete(session.as_mut(), &history, &schemas, false) {
            Err(e) => fatal = Some(status_for(&e)),
            Ok(reply) => {
                let text = reply_text(&reply);
                raw_answer_lines.extend(text.lines().map(str::to_string));
                predicted = parse_answer(&text, snapshot);
                if predicted.is_empty() {
                    history.push(ChatMessage::assistant(&text));
                    history.push(ChatMessage::user(FORMAT_REMINDER));
                    match complete(session.as_mut(), &history, &schemas, false) {
                        Err(e) => fatal = Some(status_for(&e)),
                        Ok(retry) => {
                            let text = reply_text(&retry);
                            raw_answer_lines.extend(text.lines().map(str::to_string));
                            predicted = parse_answer(&text, snapshot);
                        }
                    }
                }
            }
        }
    }

    let status = match fatal {
        Some(status) => status,
        None if !predicted.is_empty() => RunStatus::Ok,
        None if budget_exhausted && explanation.is_none() => RunStatus::BudgetExhausted,
        None => RunStatus::ParseEmpty,
    };
    if status != RunStatus::Ok {
        predicted.clear();
    }

    RunRecord {
        run_id,
        test_id: failure.test_id.clone(),
        explanation,
        predicted,
        raw_answer_lines,
        status,
        function_log: log,
    }
}

fn status_for(error: &BackendError) -> RunStatus {
    match error {
        BackendError::ContextLength(_) => RunStatus::LengthError,
        _ => RunStatus::TransportError,
    }
}

fn reply_text(reply: &crate::backend::BackendReply) -> String {
    match &reply.kind {
        ReplyKind::FinalText { content } => content.clone(),
        // complete() with allow_tools=false never returns a function call.
        ReplyKind::FunctionCall { arguments, .. } => arguments.clone(),
    }
}

/// Parses a Stage-2 answer: split into lines, strip fencing, bullets and
/// backticks, resolve each candidate through the signature cascade, keep
/// unambiguous hits in order, and drop duplicates keeping the first.
pub fn parse_answer(raw: &str, snapshot: &RepoSnapshot) -> Vec<MethodSignature> {
    let mut out: Vec<MethodSignature> = Vec::new();
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("```") {
            continue;
        }
        let cleaned = clean_answer_line(line);
        if cleaned.is_empty() {
            continue;
        }
        if let Resolution::ExactlyOne(record) = snapshot.resolve_signature(&cleaned) {
            if !out.contains(&record.signature) {
                out.push(record.signature.clone());
            }
        }
    }
    out
}

fn clean_answer_line(line: &str) -> String {
    let mut text = line.trim();
    // Leading bullets: -, *, •, "1.", "2)".
    text = text.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = text.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &text[digits..];
        if let Some(stripped) = rest.strip_prefix(['.', ')']) {
            text = stripped.trim_start();
        }
    }
    text.trim_matches('`')
        .trim()
        .trim_end_matches(['.', ',', ';', ':'])
        .trim()
        .to_string()
}

/// Runs the full campaign: `r_runs` records, run `k` using the failing test
/// chosen by the selection policy. Individual run failures are captured in
/// their records; the campaign itself never aborts.
pub fn run_campaign(
    snapshot: &RepoSnapshot,
    config: &RunConfig,
    backend: &dyn Backend,
) -> Vec<RunRecord> {
    run_campaign_parallel(snapshot, config, backend, 1)
}

/// Campaign with up to `parallelism` concurrent dialogues. Records come back
/// in run-index order regardless of completion order.
pub fn run_campaign_parallel(
    snapshot: &RepoSnapshot,
    config: &RunConfig,
    backend: &dyn Backend,
    parallelism: usize,
) -> Vec<RunRecord> {
    assert!(
        !snapshot.failures().is_empty(),
        "campaign needs at least one failing test"
    );
    let pick = |k: usize| -> &TestFailure {
        match config.selection {
            SelectionPolicy::RoundRobin => &snapshot.failures()[k % snapshot.failures().len()],
            SelectionPolicy::Fixed => &snapshot.failures()[0],
        }
    };

    if parallelism <= 1 || config.r_runs <= 1 {
        return (0..config.r_runs)
            .map(|k| run_indexed(snapshot, pick(k), config, backend, k))
            .collect();
    }

    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<RunRecord>>> =
        (0..config.r_runs).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(config.r_runs) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if k >= config.r_runs {
                    break;
                }
                let record = run_indexed(snapshot, pick(k), config, backend, k);
                *slots[k].lock().expect("run slot poisoned") = Some(record);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("run slot poisoned").expect("run completed"))
        .collect()
}
