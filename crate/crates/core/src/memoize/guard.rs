use serde::{Deserialize, Serialize};

use crate::protocol::extract_placeholder_refs;

/// Refusal phrases that mark an answer as rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionPatterns {
    patterns: Vec<String>,
}

pub const DEFAULT_REJECTIONS: [&str; 2] = [
    "not found in the documents",
    "cannot answer from provided documents",
];

/// Answer appended when a step is blocked or unanswerable.
pub const REFUSAL: &str = "Not found in the documents";

impl Default for RejectionPatterns {
    fn default() -> Self {
        Self::new(DEFAULT_REJECTIONS.iter().map(|s| s.to_string()))
    }
}

impl RejectionPatterns {
    pub fn new(patterns: impl IntoIterator<Item = String>) -> Self {
        Self {
            patterns: patterns
                .into_iter()
                .map(|p| p.trim().to_lowercase())
                .filter(|p| !p.is_empty())
                .collect(),
        }
    }

    pub fn with_extra(mut self, extra: impl IntoIterator<Item = String>) -> Self {
        self.patterns.extend(Self::new(extra).patterns);
        self
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    /// Empty (after trimming) or containing any pattern, case-insensitively.
    pub fn is_rejection(&self, answer: &str) -> bool {
        let a = answer.trim().to_lowercase();
        a.is_empty() || self.patterns.iter().any(|p| a.contains(p.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardStatus {
    Ok,
    RewriteNeeded,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardVerdict {
    pub status: GuardStatus,
    /// Empty iff `status` is `Ok`.
    pub offending_indices: Vec<usize>,
}

impl GuardVerdict {
    pub fn ok() -> Self {
        Self {
            status: GuardStatus::Ok,
            offending_indices: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == GuardStatus::Ok
    }

    pub fn blocked(self) -> Self {
        Self {
            status: GuardStatus::Blocked,
            ..self
        }
    }
}

/// Flags placeholders that point past the known answers or at a rejected answer.
pub fn cascade_guard(
    subquestion: &str,
    prior_answers: &[String],
    rejections: &RejectionPatterns,
) -> GuardVerdict {
    let mut offending: Vec<usize> = extract_placeholder_refs(subquestion)
        .into_iter()
        .map(|r| r.index)
        .filter(|&i| prior_answers.get(i).is_none_or(|a| rejections.is_rejection(a)))
        .collect();
    offending.sort_unstable();
    offending.dedup();
    if offending.is_empty() {
        GuardVerdict::ok()
    } else {
        GuardVerdict {
            status: GuardStatus::RewriteNeeded,
            offending_indices: offending,
        }
    }
}
