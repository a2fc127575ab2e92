use serde::{Deserialize, Serialize};

use crate::memoize::RejectionPatterns;
use crate::protocol::{AuditDocument, AuditPhase, ErrorStage};
use crate::text::is_stopword;

pub const DEFAULT_MISSING_EVIDENCE: [&str; 5] = [
    "not mention",
    "missing",
    "no document",
    "does not state",
    "not found",
];

const NEGATIONS: [&str; 5] = ["not mentioned", "not stated", "is not", "does not", "no information"];

/// True when an audit explanation says the evidence is absent.
pub fn looks_missing_evidence(audit: &AuditDocument, phrases: &[String]) -> bool {
    let e = audit.explanation.to_lowercase();
    phrases.iter().any(|p| e.contains(&p.to_lowercase()))
}

pub fn default_missing_evidence() -> Vec<String> {
    DEFAULT_MISSING_EVIDENCE.iter().map(|s| s.to_string()).collect()
}

fn trim_word(w: &str) -> &str {
    w.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Capitalized word runs and quoted spans of `subquestion`, stopwords removed.
pub fn key_entities(subquestion: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut run: Vec<&str> = Vec::new();
    let flush = |run: &mut Vec<&str>, out: &mut Vec<String>| {
        if !run.is_empty() {
            out.push(run.join(" "));
            run.clear();
        }
    };
    for raw in subquestion.split_whitespace() {
        let w = trim_word(raw);
        let capital = w.chars().next().is_some_and(char::is_uppercase);
        if capital && !is_stopword(&w.to_lowercase()) {
            run.push(w);
            // trailing punctuation ends the span
            if raw.ends_with([',', '?', '.', ';', ':', '!', ')']) {
                flush(&mut run, &mut out);
            }
        } else {
            flush(&mut run, &mut out);
        }
    }
    flush(&mut run, &mut out);
    for quote in ['"', '\u{201c}'] {
        let close = if quote == '"' { '"' } else { '\u{201d}' };
        let mut rest = subquestion;
        while let Some(i) = rest.find(quote) {
            let after = &rest[i + quote.len_utf8()..];
            let Some(j) = after.find(close) else { break };
            let span = after[..j].trim();
            if !span.is_empty() {
                out.push(span.to_string());
            }
            rest = &after[j + close.len_utf8()..];
        }
    }
    out.retain(|e| !e.is_empty());
    out.dedup();
    out
}

/// Short capitalized words before a period (St., Dr., Jr.) are abbreviations, not breaks.
fn is_abbreviation(word: &str) -> bool {
    let w = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    w.chars().count() <= 3 && w.chars().next().is_some_and(char::is_uppercase)
}

fn sentence_count(answer: &str) -> usize {
    let words: Vec<&str> = answer.split_whitespace().collect();
    let mut n = 1;
    for pair in words.windows(2) {
        let (w, next) = (pair[0], pair[1]);
        let terminal = w.ends_with(['.', '!', '?']);
        let abbrev = w.ends_with('.') && is_abbreviation(&w[..w.len() - 1]);
        if terminal && !abbrev && next.chars().next().is_some_and(char::is_uppercase) {
            n += 1;
        }
    }
    n
}

fn override_audit(stage: ErrorStage, explanation: String) -> AuditDocument {
    AuditDocument {
        phase: AuditPhase::Reasoning,
        error_stage: stage,
        explanation,
        action: None,
    }
}

/// Rule-based second opinion on an answer the reasoning inspector accepted.
pub fn execution_guard(
    subquestion: &str,
    answer: &str,
    docs: &[&str],
    rejections: &RejectionPatterns,
) -> Option<AuditDocument> {
    if rejections.is_rejection(answer) {
        if docs.is_empty() {
            return None;
        }
        let lowered: Vec<String> = docs.iter().map(|d| d.to_lowercase()).collect();
        let found = key_entities(subquestion)
            .into_iter()
            .find(|e| lowered.iter().any(|d| d.contains(&e.to_lowercase())))?;
        return Some(override_audit(
            ErrorStage::Reasoning,
            format!("Answer is a refusal but the documents mention {found}."),
        ));
    }
    let lower = answer.to_lowercase();
    if answer.contains(';') || sentence_count(answer) > 1 {
        return Some(override_audit(
            ErrorStage::Extraction,
            "Answer spans several clauses instead of a single span.".to_string(),
        ));
    }
    if let Some(n) = NEGATIONS.iter().find(|n| lower.contains(**n)) {
        return Some(override_audit(
            ErrorStage::Extraction,
            format!("Answer contains a negation ({n}) instead of an entity."),
        ));
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerChoice {
    Original,
    Retry,
}

/// Keeps the original unless the retry clears its re-audit, is not a refusal and
/// raises no execution-guard flag.
pub fn compare_answers(
    retry: &str,
    retry_audit: &AuditDocument,
    subquestion: &str,
    docs: &[&str],
    rejections: &RejectionPatterns,
) -> (AnswerChoice, &'static str) {
    if retry_audit.error_stage.is_error() {
        return (AnswerChoice::Original, "retry still flagged by the inspector");
    }
    if rejections.is_rejection(retry) {
        return (AnswerChoice::Original, "retry is a refusal");
    }
    if execution_guard(subquestion, retry, docs, rejections).is_some() {
        return (AnswerChoice::Original, "retry raises an execution guard flag");
    }
    (AnswerChoice::Retry, "retry resolves the flagged error")
}
