//! JUnit XML for CI systems and plain text for students.
//!
//! Gate findings become failing test cases named `gate:<subject>` so every
//! JUnit consumer sees them. Output contains no timestamps or host names;
//! with fixed time it is a pure function of the report.

use std::fmt::Write as _;

use crate::grader::{CaseResult, TestReport, Verdict, INTERNAL_ERROR};

/// Escapes text for XML character data. Characters XML 1.0 cannot carry at
/// all are written as visible `\u{..}` escapes; CR is a character reference
/// so parsers do not fold it into LF.
pub fn xml_escape(s: &str) -> String {
    escape(s, false)
}

/// Like [`xml_escape`], but also protects tabs and newlines, which parsers
/// would otherwise normalise to spaces inside attribute values.
pub fn xml_escape_attr(s: &str) -> String {
    escape(s, true)
}

fn escape(s: &str, attr: bool) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\r' => out.push_str("&#13;"),
            '\t' if attr => out.push_str("&#9;"),
            '\n' if attr => out.push_str("&#10;"),
            '\t' | '\n' => out.push(c),
            c if (c as u32) < 0x20 || matches!(c, '\u{FFFE}' | '\u{FFFF}') => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

fn time(seconds: f64, fixed: bool) -> String {
    if fixed {
        "0.000".into()
    } else {
        format!("{seconds:.3}")
    }
}

/// A failing case derived from a gate finding.
struct GateCase {
    name: String,
    message: String,
}

fn gate_cases(r: &TestReport) -> Vec<GateCase> {
    let mut out = Vec::new();
    if let Some(e) = &r.syntax_error {
        out.push(GateCase { name: "gate:syntax".into(), message: format!("{}:{e}", r.source_name) });
    }
    for v in &r.violations {
        out.push(GateCase { name: format!("gate:{}", v.subject()), message: location_line(r, v) });
    }
    out
}

fn location_line(r: &TestReport, v: &crate::featuregate::Violation) -> String {
    format!("{} at {}:{}:{}", v.headline(), r.source_name, v.span.start_line, v.span.start_col)
}

fn failure_body(c: &CaseResult) -> String {
    match &c.verdict {
        Verdict::Failed { message, counterexample: Some(cx) } => format!(
            "{message}\ncounterexample: {}\nexpected: {}\ngot: {}\nshrink steps: {}",
            cx.call, cx.expected, cx.got, cx.shrink_steps
        ),
        Verdict::Failed { message, counterexample: None } => message.clone(),
        _ => String::new(),
    }
}

/// Serializes `r` as a single JUnit document.
pub fn to_junit(r: &TestReport, fixed_time: bool) -> Vec<u8> {
    let s = r.summary();
    let total: f64 = r.cases.iter().map(|c| c.seconds).sum();
    let suite = format!(
        "<testsuite name=\"{}\" tests=\"{}\" failures=\"{}\" errors=\"{}\" skipped=\"{}\" time=\"{}\"",
        xml_escape_attr(&r.exercise),
        s.tests,
        s.failures,
        s.errors,
        s.skipped,
        time(total, fixed_time)
    );
    let mut out = String::from("<testsuites>");
    if s.tests == 0 {
        out.push_str(&suite);
        out.push_str("/></testsuites>");
        return out.into_bytes();
    }
    out.push_str(&suite);
    out.push('>');
    let class = xml_escape_attr(&r.exercise);
    for g in gate_cases(r) {
        let _ = write!(
            out,
            "<testcase name=\"{}\" classname=\"{class}\" time=\"0.000\"><failure message=\"{}\">{}</failure></testcase>",
            xml_escape_attr(&g.name),
            xml_escape_attr(&g.message),
            xml_escape(&g.message)
        );
    }
    for c in &r.cases {
        let _ = write!(
            out,
            "<testcase name=\"{}\" classname=\"{class}\" time=\"{}\"",
            xml_escape_attr(&c.name),
            time(c.seconds, fixed_time)
        );
        match &c.verdict {
            Verdict::Passed => out.push_str("/>"),
            Verdict::Failed { message, .. } => {
                let _ = write!(
                    out,
                    "><failure message=\"{}\">{}</failure></testcase>",
                    xml_escape_attr(message),
                    xml_escape(&failure_body(c))
                );
            }
            Verdict::Error => {
                let _ = write!(out, "><error message=\"{INTERNAL_ERROR}\"/></testcase>");
            }
            Verdict::Skipped(_) => out.push_str("><skipped/></testcase>"),
        }
    }
    out.push_str("</testsuite></testsuites>");
    out.into_bytes()
}

/// Student-facing feedback: gate findings first, then one block per test,
/// then the pass count.
pub fn to_text(r: &TestReport) -> Vec<u8> {
    let mut out = String::new();
    for g in gate_cases(r) {
        out.push_str(&g.message);
        out.push('\n');
    }
    if !out.is_empty() {
        out.push('\n');
    }
    for c in &r.cases {
        let (tag, body) = match &c.verdict {
            Verdict::Passed => ("PASS", String::new()),
            Verdict::Failed { .. } => ("FAIL", failure_body(c)),
            Verdict::Error => ("ERROR", INTERNAL_ERROR.to_string()),
            Verdict::Skipped(reason) => ("SKIP", reason.clone()),
        };
        let _ = writeln!(out, "[{tag}] {}", c.name);
        for line in body.lines() {
            let _ = writeln!(out, "  {line}");
        }
    }
    let s = r.summary();
    let _ = writeln!(out, "{}/{} passed", s.passed, s.tests);
    out.into_bytes()
}
