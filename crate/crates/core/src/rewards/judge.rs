use thiserror::Error;

use super::stage2::{InspectionPoint, RecoveryAction, TeacherLabel};
use crate::gateway::{ChatRequest, Gateway, GatewayError, Role};
use crate::protocol::{parse_audit, prompts, FormatError};

/// Inner text of the first `<verdict>` block, or `None` when absent.
fn verdict_text(text: &str) -> Option<&str> {
    let lower = text.to_ascii_lowercase();
    let open = lower.find("<verdict>")? + "<verdict>".len();
    let close = open + lower[open..].find("</verdict>")?;
    Some(text[open..close].trim())
}

/// 1 for an affirmative verdict, 0 otherwise, including malformed output.
pub fn parse_verdict(text: &str) -> u8 {
    match verdict_text(text).map(str::to_ascii_lowercase).as_deref() {
        Some("yes" | "1" | "true" | "pass") => 1,
        _ => 0,
    }
}

/// Scores a decomposition with one judge call per criterion.
pub fn judge_plan(gateway: &Gateway, question_id: &str, question: &str, plan_text: &str) -> Result<[u8; 4], GatewayError> {
    let mut out = [0u8; 4];
    for (slot, (_, criterion)) in out.iter_mut().zip(prompts::JUDGE_CRITERIA) {
        let req = ChatRequest::new(Role::Judge, prompts::JUDGE, prompts::judge_user(question, plan_text, criterion))
            .with_session(question_id, 0);
        *slot = parse_verdict(&gateway.complete(&req)?.text);
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("teacher output: {0}")]
    Format(#[from] FormatError),
    #[error("teacher output lacks a valid <action>: {0:?}")]
    Action(Option<String>),
}

/// Asks the teacher for the gold audit of one inspection point.
pub fn label_with_teacher(gateway: &Gateway, point: &InspectionPoint) -> Result<TeacherLabel, TeacherError> {
    let state = serde_json::to_string_pretty(&point.s_aug).expect("state serializes");
    let user = format!("PHASE: {}\nSTEP: {}\n\nSTATE:\n{state}", point.phase, point.step);
    let req = ChatRequest::new(Role::Teacher, prompts::TEACHER, user).with_session(&point.question_id, 0);
    let text = gateway.complete(&req)?.text;
    let audit = parse_audit(&text, point.phase)?;
    let action: RecoveryAction = audit
        .action
        .as_deref()
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| TeacherError::Action(audit.action.clone()))?;
    Ok(TeacherLabel {
        question_id: point.question_id.clone(),
        step: point.step,
        phase: point.phase,
        stage: audit.error_stage,
        action,
        explanation: audit.explanation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("<verdict>yes</verdict>"), 1);
        assert_eq!(parse_verdict("<VERDICT> Yes </VERDICT>"), 1);
        assert_eq!(parse_verdict("<verdict>no</verdict>"), 0);
        assert_eq!(parse_verdict("yes"), 0);
        assert_eq!(parse_verdict("<verdict>yes"), 0);
    }
}
