//! Property tests for the spec-level invariants that hold across the whole
//! input space rather than on single fixtures.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use autofl::aggregate::{rank, score_methods};
use autofl::eval::{acc_at_k, per_bug_metrics, BugResult};
use autofl::orchestrator::{RunRecord, RunStatus};
use autofl::prompt::{minimize_stack_trace, minimize_test_snippet, ERROR_MARKER};
use autofl::signature::MethodSignature;
use autofl::snapshot::{
    AssertionRules, MethodDoc, RepoSnapshot, Resolution, SnapshotDoc, SourceLine, StackFrame,
    StatementStyle,
};

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

fn method_names() -> Vec<&'static str> {
    vec!["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
}

/// A small valid snapshot: 1-2 classes, up to 6 methods, 1-2 failing tests,
/// random boolean coverage.
fn snapshot_strategy() -> impl Strategy<Value = RepoSnapshot> {
    (
        1usize..=2,                       // classes
        1usize..=6,                       // methods
        1usize..=2,                       // failures
        proptest::collection::vec(any::<bool>(), 12),
    )
        .prop_map(|(classes, methods, failures, coverage)| {
            let class_names = ["Widget", "Gadget"];
            let failure_ids: Vec<String> = (0..failures)
                .map(|i| format!("SuiteTest.test{i}()"))
                .collect();
            let names = method_names();
            let method_docs: Vec<MethodDoc> = (0..methods)
                .map(|m| {
                    let class = class_names[m % classes];
                    let name = names[m];
                    let covering: Vec<String> = failure_ids
                        .iter()
                        .enumerate()
                        .filter(|(f, _)| coverage[(m * 2 + f) % coverage.len()])
                        .map(|(_, id)| id.clone())
                        .collect();
                    MethodDoc {
                        signature: format!("{class}.{name}(int)"),
                        class: class.to_string(),
                        start_line: (10 * (m + 1)) as u32,
                        end_line: (10 * (m + 1) + 1) as u32,
                        body: format!("void {name}(int x) {{\n}}"),
                        doc: None,
                        covering_tests: covering,
                    }
                })
                .collect();
            let doc = SnapshotDoc {
                format_version: 1,
                language: "java".to_string(),
                statement_style: StatementStyle::Brace,
                simple_names: false,
                assertion_names: None,
                methods: method_docs,
                failures: failure_ids
                    .iter()
                    .enumerate()
                    .map(|(i, id)| {
                        serde_json::from_value(serde_json::json!({
                            "test_id": id,
                            "start_line": 100 + 10 * i,
                            "lines": ["void test() {", "    run();", "}"],
                            "failure_line": 101 + 10 * i,
                            "error_message": "boom"
                        }))
                        .unwrap()
                    })
                    .collect(),
                ground_truth: None,
            };
            RepoSnapshot::from_doc(doc).unwrap()
        })
}

/// Records over a fixed method pool, mixing ok and erroneous runs.
fn records_strategy() -> impl Strategy<Value = Vec<RunRecord>> {
    proptest::collection::vec(
        (
            any::<bool>(),
            proptest::collection::btree_set(0usize..6, 0..4),
        ),
        1..=6,
    )
    .prop_map(|runs| {
        let names = method_names();
        runs.into_iter()
            .enumerate()
            .map(|(i, (ok, picks))| {
                let predicted: Vec<MethodSignature> = picks
                    .iter()
                    .map(|p| MethodSignature::new("Widget", names[*p], vec!["int".to_string()]))
                    .collect();
                let ok = ok && !predicted.is_empty();
                RunRecord {
                    run_id: format!("run-{}", i + 1),
                    test_id: "SuiteTest.test0()".to_string(),
                    explanation: None,
                    predicted: if ok { predicted } else { Vec::new() },
                    raw_answer_lines: Vec::new(),
                    status: if ok { RunStatus::Ok } else { RunStatus::ParseEmpty },
                    function_log: Vec::new(),
                }
            })
            .collect()
    })
}

fn brace_test_source() -> impl Strategy<Value = (Vec<SourceLine>, u32)> {
    (2usize..=8, any::<u64>()).prop_map(|(statements, pick)| {
        let mut lines = vec![SourceLine::new(10, "public void test() {")];
        for s in 0..statements {
            let number = 11 + s as u32;
            let text = match s % 4 {
                0 => format!("    step{s}();"),
                1 => format!("    assertEquals(a{s}, b{s});"),
                2 => format!("    int v{s} = compute({s});"),
                _ => format!("    verify(mock{s});"),
            };
            lines.push(SourceLine::new(number, text));
        }
        lines.push(SourceLine::new(11 + statements as u32, "}"));
        let fail_offset = (pick % statements as u64) as u32;
        let failure_line = 11 + fail_offset;
        (lines, failure_line)
    })
}

fn frames_strategy() -> impl Strategy<Value = Vec<StackFrame>> {
    proptest::collection::vec((0u8..4, any::<bool>()), 0..40).prop_map(|raw| {
        raw.into_iter()
            .map(|(which, repo)| StackFrame {
                text: format!("at pkg.Class{which}.m(Class{which}.java:{which})"),
                in_target_repo: repo,
            })
            .collect()
    })
}

// ---------------------------------------------------------------------------
// repo_model invariants
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn snapshot_round_trips_through_its_document(snapshot in snapshot_strategy()) {
        let reloaded = RepoSnapshot::from_doc(snapshot.to_doc()).unwrap();
        prop_assert_eq!(snapshot, reloaded);
    }

    #[test]
    fn canonical_rendering_resolves_to_itself(snapshot in snapshot_strategy()) {
        for method in snapshot.methods() {
            match snapshot.resolve_signature(&method.signature.canonical()) {
                Resolution::ExactlyOne(hit) => prop_assert_eq!(&hit.signature, &method.signature),
                other => prop_assert!(false, "expected exactly-one, got {:?}", other),
            }
        }
    }

    #[test]
    fn covered_classes_agrees_with_covered_methods(snapshot in snapshot_strategy()) {
        for failure in snapshot.failures() {
            let classes = snapshot.covered_classes(&failure.test_id).unwrap();
            for class in snapshot.classes() {
                let has_covered_method = snapshot
                    .covered_methods(class)
                    .unwrap()
                    .iter()
                    .any(|sig| {
                        snapshot
                            .method(sig)
                            .map(|m| m.is_covered_by.contains(&failure.test_id))
                            .unwrap_or(false)
                    });
                prop_assert_eq!(classes.contains(class), has_covered_method);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// prompt_builder invariants
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn snippet_minimization_is_idempotent((lines, failure_line) in brace_test_source()) {
        let rules = AssertionRules::default();
        let once = minimize_test_snippet(&lines, failure_line, StatementStyle::Brace, &rules);
        let twice = minimize_test_snippet(&once, failure_line, StatementStyle::Brace, &rules);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn no_statement_after_the_failure_survives((lines, failure_line) in brace_test_source()) {
        let rules = AssertionRules::default();
        let out = minimize_test_snippet(&lines, failure_line, StatementStyle::Brace, &rules);
        let closing = lines.last().unwrap().number;
        for line in &out {
            prop_assert!(
                line.number <= failure_line || line.number == closing,
                "line {} leaked past the failure at {}",
                line.number,
                failure_line
            );
        }
        prop_assert!(out.iter().any(|l| l.text.ends_with(ERROR_MARKER)));
    }

    #[test]
    fn trace_minimization_is_idempotent_and_never_grows(frames in frames_strategy()) {
        let once = minimize_stack_trace(&frames);
        prop_assert!(once.len() <= frames.len());
        let twice = minimize_stack_trace(&once);
        prop_assert_eq!(&once, &twice);

        // Condensation adds only marker lines, never new frame texts.
        let input_texts: BTreeSet<&str> = frames.iter().map(|f| f.text.as_str()).collect();
        for frame in &once {
            prop_assert!(
                input_texts.contains(frame.text.as_str())
                    || frame.text.starts_with("... (repeated "),
                "unexpected frame text {:?}",
                frame.text
            );
        }
    }
}

// ---------------------------------------------------------------------------
// aggregator invariants
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn per_run_score_mass_distributes_exactly(records in records_strategy()) {
        let scores = score_methods(&records);
        let ok_runs = records
            .iter()
            .filter(|r| r.status == RunStatus::Ok && !r.predicted.is_empty())
            .count();
        let total: f64 = scores.values().sum();
        let expected = ok_runs as f64 / records.len() as f64;
        prop_assert!((total - expected).abs() < 1e-12);
        for score in scores.values() {
            prop_assert!(*score > 0.0 && *score <= 1.0);
        }
    }

    #[test]
    fn ranking_puts_appended_after_predicted(records in records_strategy(), snapshot in snapshot_strategy()) {
        let report = rank(&records, &snapshot);
        let mut seen_appended = false;
        let mut last_predicted_score = f64::INFINITY;
        let mut signatures = BTreeSet::new();
        for entry in &report.ranked {
            prop_assert!(signatures.insert(entry.signature.canonical()), "duplicate rank entry");
            match entry.provenance {
                autofl::aggregate::Provenance::Predicted => {
                    prop_assert!(!seen_appended, "predicted entry after appended");
                    prop_assert!(entry.score <= last_predicted_score);
                    last_predicted_score = entry.score;
                }
                autofl::aggregate::Provenance::Appended => {
                    seen_appended = true;
                    prop_assert_eq!(entry.score, 0.0);
                }
            }
        }
    }

    #[test]
    fn confidence_is_monotone_under_an_agreeing_run(records in records_strategy(), snapshot in snapshot_strategy()) {
        let report = rank(&records, &snapshot);
        let top_covered = report
            .ranked
            .iter()
            .filter(|e| e.covered)
            .max_by(|a, b| a.score.partial_cmp(&b.score).unwrap());
        let Some(top) = top_covered else { return Ok(()); };

        let mut extended = records.clone();
        extended.push(RunRecord {
            run_id: format!("run-{}", records.len() + 1),
            test_id: "SuiteTest.test0()".to_string(),
            explanation: None,
            predicted: vec![top.signature.clone()],
            raw_answer_lines: Vec::new(),
            status: RunStatus::Ok,
            function_log: Vec::new(),
        });
        let after = rank(&extended, &snapshot);
        prop_assert!(after.confidence >= report.confidence - 1e-12);
    }
}

// ---------------------------------------------------------------------------
// eval_harness invariants
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn rr_equals_ap_for_singleton_truth(list in proptest::collection::vec(0usize..8, 1..8), pick in 0usize..8) {
        let names = method_names();
        let mut seen = BTreeSet::new();
        let ranked: Vec<MethodSignature> = list
            .into_iter()
            .filter(|i| seen.insert(*i))
            .map(|i| MethodSignature::new("Widget", names[i], vec![]))
            .collect();
        let truth: BTreeSet<MethodSignature> =
            BTreeSet::from([MethodSignature::new("Widget", names[pick], vec![])]);
        let (_, rr, ap) = per_bug_metrics(&ranked, &truth);
        prop_assert_eq!(rr, ap);
    }

    #[test]
    fn acc_at_k_is_non_decreasing(ranks in proptest::collection::vec(1usize..10, 1..12)) {
        let names = method_names();
        let results: Vec<BugResult> = ranks
            .iter()
            .enumerate()
            .map(|(i, rank)| {
                // A list where the single truth method sits at `rank`.
                let ranked: Vec<MethodSignature> = (0..10)
                    .map(|p| MethodSignature::new(
                        if p + 1 == *rank { "Truth" } else { "Widget" },
                        names[p % names.len()],
                        vec![p.to_string()],
                    ))
                    .collect();
                let truth = BTreeSet::from([ranked[*rank - 1].clone()]);
                BugResult::evaluate(&format!("bug-{i}"), &ranked, 0.5, &truth).unwrap()
            })
            .collect();
        let mut previous = 0;
        for k in 1..=10 {
            let current = acc_at_k(&results, k);
            prop_assert!(current >= previous);
            previous = current;
        }
        prop_assert_eq!(acc_at_k(&results, 10), results.len());
    }
}
