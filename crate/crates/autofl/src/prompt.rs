//! Stage-1 and Stage-2 prompt construction.
//!
//! Prompt text comes from versioned assets under `assets/`; golden-file
//! tests pin the rendered bytes. Two minimization heuristics keep the
//! user prompt focused on the failure:
//!
//! * [`minimize_test_snippet`] drops everything after the statement that
//!   failed (keeping the whole outermost statement when the failure sits in
//!   a nested block), removes assertion statements that already passed, and
//!   marks the failing line.
//! * [`minimize_stack_trace`] drops frames outside the target repository and
//!   condenses contiguous subsequences repeated more than five times.

use crate::snapshot::{
    AssertionRules, RepoSnapshot, SourceLine, StackFrame, StatementStyle, TestFailure,
};

const SYSTEM_TEMPLATE: &str = include_str!("../assets/system_prompt_v1.txt");
const USER_TEMPLATE: &str = include_str!("../assets/user_prompt_v1.txt");
const STAGE2_TEMPLATE: &str = include_str!("../assets/stage2_prompt_v1.txt");
const ROOT_CAUSE_EXAMPLE: &str = include_str!("../assets/root_cause_example_v1.txt");

/// Comment marker appended to the failing line of the minimized snippet.
pub const ERROR_MARKER: &str = "// error occurred here";

/// Final sentence of the Stage-1 user prompt, directing the first call.
pub const FIRST_CALL_DIRECTIVE: &str =
    "Start by calling the `get_failing_tests_covered_classes` function.";

/// The three prompt texts for one run. `stage2_text` is identical for every
/// bug; the other two interpolate failure details and the interaction budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub stage2_text: String,
}

/// Snapshot-level settings the prompt builder needs.
#[derive(Debug, Clone)]
pub struct PromptContext {
    pub language: String,
    pub style: StatementStyle,
    pub assertion_rules: AssertionRules,
}

impl PromptContext {
    pub fn for_snapshot(snapshot: &RepoSnapshot) -> Self {
        Self {
            language: snapshot.language().to_string(),
            style: snapshot.statement_style(),
            assertion_rules: snapshot.assertion_rules().clone(),
        }
    }
}

/// Builds the prompts for one failing test.
pub fn build_stage1(ctx: &PromptContext, failure: &TestFailure, n_budget: usize) -> PromptBundle {
    let snippet = render_numbered(&minimize_test_snippet(
        &failure.test_source,
        failure.failure_line,
        ctx.style,
        &ctx.assertion_rules,
    ));
    let failure_block = render_failure_block(failure);

    let system_text = SYSTEM_TEMPLATE
        .replace("{n_budget}", &n_budget.to_string())
        .replace("{example}", ROOT_CAUSE_EXAMPLE.trim_end())
        .trim_end()
        .to_string();
    let user_text = USER_TEMPLATE
        .replace("{test_id}", &failure.test_id)
        .replace("{language}", &ctx.language)
        .replace("{snippet}", &snippet)
        .replace("{failure}", &failure_block)
        .trim_end()
        .to_string();

    PromptBundle {
        system_text,
        user_text,
        stage2_text: stage2_text(),
    }
}

/// The fixed Stage-2 prompt requesting culprit signatures.
pub fn stage2_text() -> String {
    STAGE2_TEMPLATE.trim_end().to_string()
}

/// User prompt for the no-tools baseline: the Stage-1 user prompt without
/// the closing function-call directive.
pub fn baseline_user_text(bundle: &PromptBundle) -> String {
    bundle
        .user_text
        .strip_suffix(FIRST_CALL_DIRECTIVE)
        .unwrap_or(&bundle.user_text)
        .trim_end()
        .to_string()
}

/// Renders numbered lines as `NNN : text`, one per line.
pub fn render_numbered(lines: &[SourceLine]) -> String {
    lines
        .iter()
        .map(|l| format!("{} : {}", l.number, l.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_failure_block(failure: &TestFailure) -> String {
    let mut parts: Vec<String> = Vec::new();
    let message = failure.error_message.trim_end();
    if !message.is_empty() {
        parts.push(message.to_string());
    }
    for frame in minimize_stack_trace(&failure.stack_frames) {
        parts.push(frame.text);
    }
    parts.join("\n")
}

// ---------------------------------------------------------------------------
// Test snippet minimization
// ---------------------------------------------------------------------------

/// Minimizes a failing test's source: keeps the header, the non-assertion
/// statements before the failure, the entire outermost statement containing
/// the failure (marked with [`ERROR_MARKER`]), and any closing-delimiter
/// trailer. Statements after the failing one are dropped. Idempotent.
pub fn minimize_test_snippet(
    lines: &[SourceLine],
    failure_line: u32,
    style: StatementStyle,
    rules: &AssertionRules,
) -> Vec<SourceLine> {
    let Some(fail_idx) = lines.iter().position(|l| l.number == failure_line) else {
        return lines.to_vec();
    };
    if lines.len() == 1 {
        return vec![with_marker(&lines[0])];
    }

    let spans = match style {
        StatementStyle::Brace => analyze_brace(lines),
        StatementStyle::Indent => analyze_indent(lines),
    };

    let mut kept: Vec<SourceLine> = Vec::new();
    for idx in spans.header.clone() {
        kept.push(lines[idx].clone());
        if idx == fail_idx {
            // Degenerate input: the failure sits in the header itself.
            let last = kept.len() - 1;
            kept[last] = with_marker(&kept[last]);
            kept.extend(spans.trailer.clone().map(|i| lines[i].clone()));
            return kept;
        }
    }

    let failing_span = spans
        .statements
        .iter()
        .find(|span| span.contains(&fail_idx))
        .cloned();

    match failing_span {
        Some(failing) => {
            for span in &spans.statements {
                if span.start >= failing.start {
                    break;
                }
                if !is_assertion_span(lines, span.clone(), rules) {
                    kept.extend(span.clone().map(|i| lines[i].clone()));
                }
            }
            for idx in failing {
                if idx == fail_idx {
                    kept.push(with_marker(&lines[idx]));
                } else {
                    kept.push(lines[idx].clone());
                }
            }
        }
        None => {
            // Failure in the trailer: keep every statement up to it.
            for idx in spans.header.end..=fail_idx {
                if idx == fail_idx {
                    kept.push(with_marker(&lines[idx]));
                } else {
                    kept.push(lines[idx].clone());
                }
            }
            return kept
                .into_iter()
                .chain(spans.trailer.clone().skip_while(|i| *i <= fail_idx).map(|i| lines[i].clone()))
                .collect();
        }
    }

    kept.extend(spans.trailer.clone().map(|i| lines[i].clone()));
    kept
}

fn with_marker(line: &SourceLine) -> SourceLine {
    if line.text.trim_end().ends_with(ERROR_MARKER) {
        return line.clone();
    }
    SourceLine::new(line.number, format!("{} {}", line.text.trim_end(), ERROR_MARKER))
}

struct StatementSpans {
    header: std::ops::Range<usize>,
    statements: Vec<std::ops::Range<usize>>,
    trailer: std::ops::Range<usize>,
}

/// Per-line nesting deltas, ignoring string/char literals and line comments.
fn nesting_delta(text: &str) -> (i32, i32) {
    let mut braces = 0i32;
    let mut parens = 0i32;
    let mut chars = text.chars().peekable();
    let mut in_string: Option<char> = None;
    while let Some(c) = chars.next() {
        if let Some(quote) = in_string {
            if c == '\\' {
                chars.next();
            } else if c == quote {
                in_string = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => in_string = Some(c),
            '/' if chars.peek() == Some(&'/') => break,
            '#' => break,
            '{' => braces += 1,
            '}' => braces -= 1,
            '(' | '[' => parens += 1,
            ')' | ']' => parens -= 1,
            _ => {}
        }
    }
    (braces, parens)
}

fn is_pure_closer(text: &str) -> bool {
    let t = text.trim();
    !t.is_empty() && t.chars().all(|c| matches!(c, '}' | ')' | ']' | ';'))
}

fn analyze_brace(lines: &[SourceLine]) -> StatementSpans {
    let mut brace_depth = 0i32;
    let mut paren_depth = 0i32;
    let mut depth_after = Vec::with_capacity(lines.len());
    let mut paren_after = Vec::with_capacity(lines.len());
    for line in lines {
        let (b, p) = nesting_delta(&line.text);
        brace_depth += b;
        paren_depth += p;
        depth_after.push(brace_depth);
        paren_after.push(paren_depth);
    }

    let header_end = depth_after.iter().position(|d| *d >= 1);
    let Some(header_end) = header_end else {
        // No braces at all: every line is its own statement.
        return StatementSpans {
            header: 0..0,
            statements: (0..lines.len()).map(|i| i..i + 1).collect(),
            trailer: lines.len()..lines.len(),
        };
    };

    let mut trailer_start = lines.len();
    while trailer_start > header_end + 1 {
        let candidate = &lines[trailer_start - 1].text;
        if candidate.trim().is_empty() || is_pure_closer(candidate) {
            trailer_start -= 1;
        } else {
            break;
        }
    }

    let mut statements = Vec::new();
    let mut start = header_end + 1;
    for i in start..trailer_start {
        let text = strip_marker(&lines[i].text);
        let trimmed = text.trim_end();
        let complete = depth_after[i] <= 1
            && paren_after[i] <= 0
            && (trimmed.ends_with(';') || trimmed.ends_with('}'));
        if complete || i + 1 == trailer_start {
            statements.push(start..i + 1);
            start = i + 1;
        }
    }

    StatementSpans {
        header: 0..header_end + 1,
        statements,
        trailer: trailer_start..lines.len(),
    }
}

fn indent_width(text: &str) -> usize {
    let mut width = 0;
    for c in text.chars() {
        match c {
            ' ' => width += 1,
            '\t' => width += 4,
            _ => break,
        }
    }
    width
}

fn analyze_indent(lines: &[SourceLine]) -> StatementSpans {
    let body_indent = lines[1..]
        .iter()
        .filter(|l| !l.text.trim().is_empty())
        .map(|l| indent_width(&l.text))
        .min()
        .unwrap_or(0);

    let mut starts: Vec<usize> = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        if !line.text.trim().is_empty() && indent_width(&line.text) <= body_indent {
            starts.push(i);
        }
    }

    let mut statements = Vec::new();
    if starts.is_empty() {
        statements.push(1..lines.len());
    } else {
        if starts[0] > 1 {
            statements.push(1..starts[0]);
        }
        for (si, &s) in starts.iter().enumerate() {
            let end = starts.get(si + 1).copied().unwrap_or(lines.len());
            statements.push(s..end);
        }
    }

    StatementSpans {
        header: 0..1,
        statements,
        trailer: lines.len()..lines.len(),
    }
}

fn strip_marker(text: &str) -> &str {
    text.trim_end()
        .strip_suffix(ERROR_MARKER)
        .map(str::trim_end)
        .unwrap_or(text)
}

fn is_assertion_span(
    lines: &[SourceLine],
    span: std::ops::Range<usize>,
    rules: &AssertionRules,
) -> bool {
    let first = span
        .clone()
        .map(|i| lines[i].text.trim())
        .find(|t| !t.is_empty());
    match first {
        Some(text) => is_assertion_statement(text, rules),
        None => false,
    }
}

/// A statement is an assertion when its first token or its first called
/// identifier matches the configured assertion names.
fn is_assertion_statement(text: &str, rules: &AssertionRules) -> bool {
    if let Some(token) = leading_identifier(text) {
        if rules.matches(token) {
            return true;
        }
    }
    if let Some(call) = first_call_identifier(text) {
        if rules.matches(call) {
            return true;
        }
    }
    false
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn leading_identifier(text: &str) -> Option<&str> {
    let text = text.trim_start();
    let end = text.find(|c: char| !is_ident_char(c)).unwrap_or(text.len());
    if end == 0 {
        None
    } else {
        Some(&text[..end])
    }
}

fn first_call_identifier(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if is_ident_char(bytes[i] as char) && (i == 0 || !is_ident_char(bytes[i - 1] as char)) {
            let start = i;
            while i < bytes.len() && is_ident_char(bytes[i] as char) {
                i += 1;
            }
            if bytes.get(i) == Some(&b'(') {
                return Some(&text[start..i]);
            }
        } else {
            i += 1;
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Stack trace minimization
// ---------------------------------------------------------------------------

/// Drops frames outside the target repository, then condenses any contiguous
/// subsequence repeated more than five times into a single instance followed
/// by a `... (repeated K times) ...` marker frame. Idempotent; the output is
/// never longer than the input.
pub fn minimize_stack_trace(frames: &[StackFrame]) -> Vec<StackFrame> {
    let kept: Vec<StackFrame> = frames.iter().filter(|f| f.in_target_repo).cloned().collect();

    let mut out: Vec<StackFrame> = Vec::with_capacity(kept.len());
    let mut i = 0;
    while i < kept.len() {
        let mut condensed = false;
        for period in 1..=(kept.len() - i) / 2 {
            let mut reps = 1;
            while i + (reps + 1) * period <= kept.len()
                && kept[i..i + period] == kept[i + reps * period..i + (reps + 1) * period]
            {
                reps += 1;
            }
            if reps > 5 {
                out.extend_from_slice(&kept[i..i + period]);
                out.push(StackFrame::repo(format!("... (repeated {reps} times) ...")));
                i += reps * period;
                condensed = true;
                break;
            }
        }
        if !condensed {
            out.push(kept[i].clone());
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules() -> AssertionRules {
        AssertionRules::default()
    }

    fn lang48_source() -> Vec<SourceLine> {
        vec![
            SourceLine::new(381, "    public void testBigDecimal() {"),
            SourceLine::new(382, "        BigDecimal o1 = new BigDecimal(\"2.0\");"),
            SourceLine::new(383, "        BigDecimal o2 = new BigDecimal(\"2.00\");"),
            SourceLine::new(384, "        assertEquals(o1, o2);"),
            SourceLine::new(
                385,
                "        assertTrue(new EqualsBuilder().append(o1, o2).isEquals());",
            ),
            SourceLine::new(386, "    }"),
        ]
    }

    #[test]
    fn snippet_drops_passed_assertion_and_marks_failure() {
        let out = minimize_test_snippet(&lang48_source(), 385, StatementStyle::Brace, &rules());
        let numbers: Vec<u32> = out.iter().map(|l| l.number).collect();
        assert_eq!(numbers, vec![381, 382, 383, 385, 386]);
        assert!(out[3].text.ends_with(ERROR_MARKER));
        assert!(!out.iter().any(|l| l.number == 384));
    }

    #[test]
    fn snippet_single_line() {
        let lines = vec![SourceLine::new(7, "assert foo() == 1")];
        let out = minimize_test_snippet(&lines, 7, StatementStyle::Brace, &rules());
        assert_eq!(out.len(), 1);
        assert!(out[0].text.ends_with(ERROR_MARKER));
    }

    #[test]
    fn snippet_keeps_whole_loop_around_failure() {
        let lines = vec![
            SourceLine::new(10, "public void test() {"),
            SourceLine::new(11, "    setUpThings();"),
            SourceLine::new(12, "    for (int i = 0; i < 3; i++) {"),
            SourceLine::new(13, "        check(i);"),
            SourceLine::new(14, "    }"),
            SourceLine::new(15, "    tearDownThings();"),
            SourceLine::new(16, "}"),
        ];
        let out = minimize_test_snippet(&lines, 13, StatementStyle::Brace, &rules());
        let numbers: Vec<u32> = out.iter().map(|l| l.number).collect();
        assert_eq!(numbers, vec![10, 11, 12, 13, 14, 16]);
        assert!(out[3].text.ends_with(ERROR_MARKER));
    }

    #[test]
    fn snippet_drops_statements_after_failure() {
        let lines = vec![
            SourceLine::new(1, "public void test() {"),
            SourceLine::new(2, "    first();"),
            SourceLine::new(3, "    second();"),
            SourceLine::new(4, "    third();"),
            SourceLine::new(5, "}"),
        ];
        let out = minimize_test_snippet(&lines, 3, StatementStyle::Brace, &rules());
        let numbers: Vec<u32> = out.iter().map(|l| l.number).collect();
        assert_eq!(numbers, vec![1, 2, 3, 5]);
    }

    #[test]
    fn snippet_indent_style() {
        let lines = vec![
            SourceLine::new(20, "def test_widget(self):"),
            SourceLine::new(21, "    w = Widget()"),
            SourceLine::new(22, "    self.assertTrue(w.ready())"),
            SourceLine::new(23, "    for i in range(3):"),
            SourceLine::new(24, "        w.step(i)"),
            SourceLine::new(25, "    w.finish()"),
        ];
        let out = minimize_test_snippet(&lines, 24, StatementStyle::Indent, &rules());
        let numbers: Vec<u32> = out.iter().map(|l| l.number).collect();
        // Passed assertion (22) removed, loop (23-24) kept whole, 25 dropped.
        assert_eq!(numbers, vec![20, 21, 23, 24]);
        assert!(out[3].text.ends_with(ERROR_MARKER));
    }

    #[test]
    fn snippet_minimization_is_idempotent() {
        let once = minimize_test_snippet(&lang48_source(), 385, StatementStyle::Brace, &rules());
        let twice = minimize_test_snippet(&once, 385, StatementStyle::Brace, &rules());
        assert_eq!(once, twice);
    }

    #[test]
    fn assertion_detection_variants() {
        let r = rules();
        assert!(is_assertion_statement("assertEquals(a, b);", &r));
        assert!(is_assertion_statement("Assert.assertTrue(x);", &r));
        assert!(is_assertion_statement("self.assertEqual(a, b)", &r));
        assert!(is_assertion_statement("assert x == y", &r));
        assert!(is_assertion_statement("fail(\"nope\");", &r));
        assert!(is_assertion_statement("verify(mock).run();", &r));
        assert!(!is_assertion_statement("int x = compute();", &r));
        assert!(!is_assertion_statement("verifyNoMore(mock);", &r));
    }

    #[test]
    fn trace_filters_external_frames() {
        let frames = vec![
            StackFrame::external("at lib.Helper.run(Helper.java:1)"),
            StackFrame::repo("at app.Main.go(Main.java:2)"),
            StackFrame::external("at lib.Other.run(Other.java:3)"),
        ];
        let out = minimize_stack_trace(&frames);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "at app.Main.go(Main.java:2)");
    }

    #[test]
    fn trace_condenses_repeats_over_threshold() {
        let mut frames = Vec::new();
        for _ in 0..10 {
            frames.push(StackFrame::repo("at a.A.f(A.java:1)"));
            frames.push(StackFrame::repo("at b.B.g(B.java:2)"));
        }
        let out = minimize_stack_trace(&frames);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].text, "at a.A.f(A.java:1)");
        assert_eq!(out[1].text, "at b.B.g(B.java:2)");
        assert_eq!(out[2].text, "... (repeated 10 times) ...");
    }

    #[test]
    fn trace_keeps_exactly_five_repeats() {
        let mut frames = Vec::new();
        for _ in 0..5 {
            frames.push(StackFrame::repo("at a.A.f(A.java:1)"));
            frames.push(StackFrame::repo("at b.B.g(B.java:2)"));
        }
        let out = minimize_stack_trace(&frames);
        assert_eq!(out, frames);
    }

    #[test]
    fn trace_minimization_is_idempotent() {
        let mut frames = vec![StackFrame::repo("at top.T.t(T.java:9)")];
        for _ in 0..8 {
            frames.push(StackFrame::repo("at r.R.rec(R.java:5)"));
        }
        let once = minimize_stack_trace(&frames);
        let twice = minimize_stack_trace(&once);
        assert_eq!(once, twice);
    }

    fn lang48_failure() -> TestFailure {
        TestFailure {
            test_id: "org.apache.commons.lang.builder.EqualsBuilderTest.testBigDecimal()"
                .to_string(),
            test_source: lang48_source(),
            failure_line: 385,
            error_message: "junit.framework.AssertionFailedError".to_string(),
            stack_frames: vec![StackFrame::repo(
                "at org.apache.commons.lang.builder.EqualsBuilderTest.testBigDecimal(EqualsBuilderTest.java:385)",
            )],
        }
    }

    fn ctx() -> PromptContext {
        PromptContext {
            language: "java".to_string(),
            style: StatementStyle::Brace,
            assertion_rules: AssertionRules::default(),
        }
    }

    #[test]
    fn user_prompt_structure() {
        let bundle = build_stage1(&ctx(), &lang48_failure(), 10);
        assert!(bundle.user_text.contains("testBigDecimal"));
        assert!(bundle.user_text.contains("```java\n"));
        assert!(bundle.user_text.contains("385 : "));
        assert!(bundle.user_text.contains(ERROR_MARKER));
        assert!(!bundle.user_text.contains("384 :"));
        assert!(bundle.user_text.ends_with(FIRST_CALL_DIRECTIVE));
    }

    #[test]
    fn system_prompt_mentions_budget() {
        let bundle = build_stage1(&ctx(), &lang48_failure(), 10);
        assert!(bundle.system_text.contains("10"));
        let bundle = build_stage1(&ctx(), &lang48_failure(), 7);
        assert!(bundle.system_text.contains("7"));
    }

    #[test]
    fn stage2_prompt_is_fixed_and_names_the_format() {
        let a = build_stage1(&ctx(), &lang48_failure(), 10);
        let mut other = lang48_failure();
        other.test_id = "X.y()".to_string();
        let b = build_stage1(&ctx(), &other, 3);
        assert_eq!(a.stage2_text, b.stage2_text);
        assert!(a.stage2_text.contains("most likely culprit methods"));
        assert!(a
            .stage2_text
            .contains("`ClassName.MethodName(ArgType1, ArgType2, ...)`"));
    }

    #[test]
    fn empty_trace_failure_block_is_message_only() {
        let mut failure = lang48_failure();
        failure.stack_frames.clear();
        let bundle = build_stage1(&ctx(), &failure, 10);
        assert!(bundle
            .user_text
            .contains("```\njunit.framework.AssertionFailedError\n```"));
    }

    #[test]
    fn baseline_text_drops_directive() {
        let bundle = build_stage1(&ctx(), &lang48_failure(), 10);
        let baseline = baseline_user_text(&bundle);
        assert!(!baseline.contains(FIRST_CALL_DIRECTIVE));
        assert!(baseline.contains("testBigDecimal"));
    }
}
