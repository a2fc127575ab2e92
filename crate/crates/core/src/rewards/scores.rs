use serde::{Deserialize, Serialize};

use crate::eval::exact_match;
use crate::protocol::{parse_audit, parse_citations, parse_plan, parse_solver_output, AuditPhase, ErrorStage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerWeights {
    pub fmt: f64,
    pub cnt: f64,
    pub judge: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self { fmt: 1.0, cnt: 2.0, judge: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverWeights {
    pub fmt: f64,
    pub acc: f64,
    pub rel: f64,
}

impl Default for SolverWeights {
    fn default() -> Self {
        Self { fmt: 1.0, acc: 1.0, rel: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InspectorWeights {
    pub fmt: f64,
    pub det: f64,
    pub len: f64,
}

impl Default for InspectorWeights {
    fn default() -> Self {
        Self { fmt: 0.5, det: 2.0, len: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub planner: PlannerWeights,
    pub solver: SolverWeights,
    pub inspector: InspectorWeights,
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("planner.fmt", self.planner.fmt),
            ("planner.cnt", self.planner.cnt),
            ("planner.judge", self.planner.judge),
            ("solver.fmt", self.solver.fmt),
            ("solver.acc", self.solver.acc),
            ("solver.rel", self.solver.rel),
            ("inspector.fmt", self.inspector.fmt),
            ("inspector.det", self.inspector.det),
            ("inspector.len", self.inspector.len),
        ];
        match all.iter().find(|(_, w)| !(*w > 0.0 && w.is_finite())) {
            Some((name, w)) => Err(format!("weight {name} must be positive, got {w}")),
            None => Ok(()),
        }
    }
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerRewardBreakdown {
    pub r_fmt: f64,
    pub r_count: f64,
    /// Qualifier preservation, entity boxing, disambiguation, dependency logic.
    pub judge: [u8; 4],
    pub n_pred: usize,
    pub total: f64,
}

pub fn planner_reward(plan_text: &str, n_gold: usize, judge: [u8; 4], w: &PlannerWeights) -> PlannerRewardBreakdown {
    let parsed = parse_plan(plan_text).ok();
    let n_pred = parsed.as_ref().map_or(0, |p| p.subquestions.len());
    let r_fmt = ind(parsed.is_some());
    let r_count = ind(parsed.is_some() && n_pred == n_gold);
    let judge_sum: f64 = judge.iter().map(|&j| f64::from(j.min(1))).sum();
    PlannerRewardBreakdown {
        r_fmt,
        r_count,
        judge,
        n_pred,
        total: w.fmt * r_fmt + w.cnt * r_count + w.judge * judge_sum,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRewardBreakdown {
    pub r_fmt: f64,
    pub r_acc: f64,
    /// One of 1.0 (same set), 0.5 (overlap), 0.0 (disjoint).
    pub r_rel: f64,
    pub total: f64,
}

/// Canonical `Doc_N` form for ids given as `Doc_3`, `[Doc_3]` or `doc_3`.
fn canonical_doc(id: &str) -> String {
    let t = id.trim();
    let wrapped = if t.starts_with('[') { t.to_string() } else { format!("[{t}]") };
    parse_citations(&wrapped)
        .into_iter()
        .next()
        .unwrap_or_else(|| t.to_string())
}

/// Piecewise sources score over cited and gold id sets.
pub fn sources_score<S: AsRef<str>, T: AsRef<str>>(cited: &[S], gold: &[T]) -> f64 {
    use std::collections::BTreeSet;
    let c: BTreeSet<String> = cited.iter().map(|s| canonical_doc(s.as_ref())).collect();
    let g: BTreeSet<String> = gold.iter().map(|s| canonical_doc(s.as_ref())).collect();
    if c == g {
        1.0
    } else if c.intersection(&g).next().is_some() {
        0.5
    } else {
        0.0
    }
}

pub fn solver_reward<S: AsRef<str>, T: AsRef<str>>(
    solver_text: &str,
    gold_answer: &str,
    gold_aliases: &[S],
    gold_source_ids: &[T],
    w: &SolverWeights,
) -> SolverRewardBreakdown {
    let (r_fmt, r_acc, r_rel) = match parse_solver_output(solver_text) {
        Ok(doc) => {
            let golds: Vec<&str> = std::iter::once(gold_answer)
                .chain(gold_aliases.iter().map(AsRef::as_ref))
                .collect();
            (1.0, ind(exact_match(&doc.answer, &golds)), sources_score(&doc.sources, gold_source_ids))
        }
        Err(_) => (0.0, 0.0, 0.0),
    };
    SolverRewardBreakdown {
        r_fmt,
        r_acc,
        r_rel,
        total: w.fmt * r_fmt + w.acc * r_acc + w.rel * r_rel,
    }
}

/// Length shaping when the gold stage is `none`: full credit up to 3 words.
pub fn f_none(words: usize) -> f64 {
    if words <= 3 {
        1.0
    } else {
        (1.0 - (words as f64 - 3.0) / 10.0).max(0.0)
    }
}

/// Length shaping when the gold stage is an error: full credit within [15, 50] words.
pub fn f_err(words: usize) -> f64 {
    let dist = if words < 15 {
        15 - words
    } else { words.saturating_sub(50) };
    (1.0 - dist as f64 / 15.0).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectorRewardBreakdown {
    pub r_fmt: f64,
    pub r_detect: f64,
    pub r_length: f64,
    pub predicted: Option<ErrorStage>,
    pub explanation_words: usize,
    pub total: f64,
}

pub fn inspector_reward(
    audit_text: &str,
    phase: AuditPhase,
    e_star: ErrorStage,
    w: &InspectorWeights,
) -> InspectorRewardBreakdown {
    let (r_fmt, r_detect, r_length, predicted, words) = match parse_audit(audit_text, phase) {
        Ok(a) => {
            let words = a.explanation.split_whitespace().count();
            let len = if e_star == ErrorStage::None { f_none(words) } else { f_err(words) };
            (1.0, ind(a.error_stage == e_star), len, Some(a.error_stage), words)
        }
        Err(_) => (0.0, 0.0, 0.0, None, 0),
    };
    InspectorRewardBreakdown {
        r_fmt,
        r_detect,
        r_length,
        predicted,
        explanation_words: words,
        total: w.fmt * r_fmt + w.det * r_detect + w.len * r_length,
    }
}
