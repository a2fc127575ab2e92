use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::eval::{exact_match, parse_jsonl, DatasetError};
use crate::memoize::{EventType, TraceEvent};
use crate::protocol::{AuditPhase, ErrorStage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryAction {
    None,
    RewriteSubquestion,
    ExpandRetrieval,
    RetrySolver,
}

impl std::str::FromStr for RecoveryAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(Value::String(s.trim().to_ascii_lowercase()))
            .map_err(|_| format!("unknown recovery action {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherLabel {
    pub question_id: String,
    pub step: usize,
    pub phase: AuditPhase,
    pub stage: ErrorStage,
    pub action: RecoveryAction,
    pub explanation: String,
}

pub fn load_teacher_labels(path: impl AsRef<Path>) -> Result<Vec<TeacherLabel>, DatasetError> {
    let file = std::fs::File::open(path)?;
    read_teacher_labels(std::io::BufReader::new(file))
}

pub fn read_teacher_labels(reader: impl BufRead) -> Result<Vec<TeacherLabel>, DatasetError> {
    parse_jsonl(reader, |l: &TeacherLabel| {
        if ErrorStage::admissible(l.phase).contains(&l.stage) {
            Ok(())
        } else {
            Err(format!("stage {} is not admissible in the {} phase", l.stage.as_str(), l.phase))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanView {
    pub raw: String,
    pub subquestions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverView {
    pub raw: String,
    pub reasoning: String,
    pub sources: Vec<String>,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub subquestion: String,
    pub evidence_ids: Vec<String>,
    /// Absent for a context inspection, which happens before solving.
    pub solver: Option<SolverView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryView {
    pub plan: PlanView,
    pub steps: Vec<StepView>,
}

/// Agent state at one inspection point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub question: String,
    pub trajectory: TrajectoryView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionPoint {
    pub question_id: String,
    pub step: usize,
    pub phase: AuditPhase,
    pub s_aug: AugmentedState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAudit {
    pub stage: ErrorStage,
    pub action: RecoveryAction,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Record {
    pub question_id: String,
    pub step: usize,
    pub phase: AuditPhase,
    pub s_aug: AugmentedState,
    pub e_star: GoldAudit,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MiningError {
    #[error("no teacher label for question {question_id} step {step} phase {phase}")]
    MissingTeacherLabel {
        question_id: String,
        step: usize,
        phase: AuditPhase,
    },
    #[error("no gold answer for question {0}")]
    MissingGold(String),
    #[error("trace for {question_id} is malformed: {message}")]
    MalformedTrace { question_id: String, message: String },
}

fn step_of(e: &TraceEvent) -> Option<usize> {
    e.payload.get("step").and_then(Value::as_u64).map(|s| s as usize)
}

fn str_field(v: &Value, key: &str) -> String {
    v.get(key).and_then(Value::as_str).unwrap_or_default().to_string()
}

fn str_list(v: &Value, key: &str) -> Vec<String> {
    v.get(key)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
        .unwrap_or_default()
}

fn is_fatal(e: &TraceEvent) -> bool {
    e.event_type == EventType::Error && e.payload.get("kind").and_then(Value::as_str) == Some("fatal")
}

/// Final answer recorded in a trace, or `None` when the run ended in a fatal error or
/// never reached a step.
pub fn final_answer_from_trace(events: &[TraceEvent]) -> Option<String> {
    if events.last().is_none_or(is_fatal) {
        return None;
    }
    let last_step = events
        .iter()
        .filter(|e| e.event_type != EventType::Plan)
        .filter_map(step_of)
        .max()?;
    let in_step: Vec<&TraceEvent> = events.iter().filter(|e| step_of(e) == Some(last_step)).collect();
    let answer_of = |pred: &dyn Fn(&TraceEvent) -> Option<String>| in_step.iter().rev().find_map(|e| pred(e));
    answer_of(&|e| (e.event_type == EventType::CacheHit).then(|| str_field(&e.payload, "answer")))
        .or_else(|| {
            answer_of(&|e| {
                (e.event_type == EventType::Error
                    && e.payload.get("kind").and_then(Value::as_str) == Some("guard_blocked"))
                .then(|| str_field(&e.payload, "answer"))
            })
        })
        .or_else(|| {
            answer_of(&|e| {
                e.payload
                    .get("selection")
                    .and_then(|s| s.get("answer"))
                    .and_then(Value::as_str)
                    .map(str::to_string)
            })
        })
        .or_else(|| answer_of(&|e| (e.event_type == EventType::Solve).then(|| str_field(&e.payload, "answer"))))
}

fn question_id_of(events: &[TraceEvent]) -> Option<&str> {
    events.first().map(|e| e.question_id.as_str())
}

/// One inspection point per distinct (step, phase) audited in the trace, with the state
/// the inspector saw at its first audit of that step and phase.
pub fn inspection_points(events: &[TraceEvent]) -> Result<Vec<InspectionPoint>, MiningError> {
    let Some(qid) = question_id_of(events) else {
        return Ok(Vec::new());
    };
    let malformed = |message: &str| MiningError::MalformedTrace {
        question_id: qid.to_string(),
        message: message.to_string(),
    };
    let plan_ev = events
        .iter()
        .find(|e| e.event_type == EventType::Plan)
        .ok_or_else(|| malformed("no plan event"))?;
    let question = str_field(&plan_ev.payload, "question");
    let plan = PlanView {
        raw: str_field(&plan_ev.payload, "raw"),
        subquestions: str_list(&plan_ev.payload, "subquestions"),
    };

    // completed view of each step: final subquestion, last solver output and its evidence
    let mut finished: BTreeMap<usize, StepView> = BTreeMap::new();
    for e in events {
        let Some(step) = step_of(e) else { continue };
        match e.event_type {
            EventType::Solve => {
                finished.insert(step, step_view(&e.payload, true));
            }
            EventType::CacheHit => {
                finished.entry(step).or_insert_with(|| StepView {
                    subquestion: str_field(&e.payload, "subquestion"),
                    evidence_ids: Vec::new(),
                    solver: Some(SolverView {
                        raw: String::new(),
                        reasoning: String::new(),
                        sources: Vec::new(),
                        answer: str_field(&e.payload, "answer"),
                    }),
                });
            }
            _ => {}
        }
    }

    let mut seen = BTreeSet::new();
    let mut points = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let phase = match e.event_type {
            EventType::InspectContext => AuditPhase::Context,
            EventType::InspectReason => AuditPhase::Reasoning,
            _ => continue,
        };
        let step = step_of(e).ok_or_else(|| malformed("inspect event without step"))?;
        if !seen.insert((step, phase)) {
            continue;
        }
        let mut steps: Vec<StepView> = finished.range(..step).map(|(_, v)| v.clone()).collect();
        let current = match phase {
            AuditPhase::Context => StepView {
                subquestion: str_field(&e.payload, "subquestion"),
                evidence_ids: str_list(&e.payload, "doc_ids"),
                solver: None,
            },
            AuditPhase::Reasoning => {
                let solve = events[..i]
                    .iter()
                    .rev()
                    .find(|s| s.event_type == EventType::Solve && step_of(s) == Some(step))
                    .ok_or_else(|| malformed("reasoning audit without a preceding solve"))?;
                step_view(&solve.payload, true)
            }
        };
        steps.push(current);
        points.push(InspectionPoint {
            question_id: qid.to_string(),
            step,
            phase,
            s_aug: AugmentedState {
                question: question.clone(),
                trajectory: TrajectoryView {
                    plan: plan.clone(),
                    steps,
                },
            },
        });
    }
    Ok(points)
}

fn step_view(payload: &Value, with_solver: bool) -> StepView {
    StepView {
        subquestion: str_field(payload, "subquestion"),
        evidence_ids: str_list(payload, "doc_ids"),
        solver: with_solver.then(|| SolverView {
            raw: str_field(payload, "raw"),
            reasoning: str_field(payload, "reasoning"),
            sources: str_list(payload, "sources"),
            answer: str_field(payload, "answer"),
        }),
    }
}

/// Keeps traces whose final answer exactly matches a gold answer and pairs each of
/// their inspection points with its teacher label.
pub fn mine_stage2_dataset(
    traces: &[Vec<TraceEvent>],
    golds: &HashMap<String, Vec<String>>,
    labels: &[TeacherLabel],
) -> Result<Vec<Stage2Record>, MiningError> {
    let by_key: HashMap<(&str, usize, AuditPhase), &TeacherLabel> = labels
        .iter()
        .map(|l| ((l.question_id.as_str(), l.step, l.phase), l))
        .collect();
    let mut out = Vec::new();
    for events in traces {
        let Some(qid) = question_id_of(events) else { continue };
        let gold = golds.get(qid).ok_or_else(|| MiningError::MissingGold(qid.to_string()))?;
        let Some(answer) = final_answer_from_trace(events) else { continue };
        if !exact_match(&answer, gold) {
            continue;
        }
        for p in inspection_points(events)? {
            let label = by_key
                .get(&(p.question_id.as_str(), p.step, p.phase))
                .copied()
                .ok_or_else(|| MiningError::MissingTeacherLabel {
                    question_id: p.question_id.clone(),
                    step: p.step,
                    phase: p.phase,
                })?;
            out.push(Stage2Record {
                question_id: p.question_id,
                step: p.step,
                phase: p.phase,
                s_aug: p.s_aug,
                e_star: GoldAudit {
                    stage: label.stage,
                    action: label.action,
                    explanation: label.explanation.clone(),
                },
            });
        }
    }
    Ok(out)
}
