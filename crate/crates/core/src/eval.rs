//! Answer metrics, retrieval recall, inspection precision/recall, latency and dataset I/O.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memoize::{EventType, TraceEvent};
use crate::protocol::{AuditPhase, ErrorStage};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let stripped: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    stripped
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match<S: AsRef<str>>(pred: &str, golds: &[S]) -> bool {
    let p = normalize_answer(pred);
    golds.iter().any(|g| normalize_answer(g.as_ref()) == p)
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt.is_empty() && gt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-multiset F1, maximized over golds.
pub fn token_f1<S: AsRef<str>>(pred: &str, golds: &[S]) -> f64 {
    golds
        .iter()
        .map(|g| f1_single(pred, g.as_ref()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    /// Mean over questions with gold support; `None` when no question has any.
    pub recall: Option<f64>,
    pub scored: usize,
    pub excluded: usize,
}

/// Mean of `|retrieved ∩ gold| / |gold|` over questions that have gold support.
pub fn retrieval_recall(retrieved: &[Vec<String>], gold: &[Option<Vec<String>>]) -> RecallReport {
    let mut sum = 0.0;
    let mut scored = 0;
    let mut excluded = 0;
    for (i, g) in gold.iter().enumerate() {
        let Some(g) = g.as_ref().filter(|g| !g.is_empty()) else {
            excluded += 1;
            continue;
        };
        let got: std::collections::HashSet<&str> = retrieved
            .get(i)
            .map(|r| r.iter().map(String::as_str).collect())
            .unwrap_or_default();
        let uniq: std::collections::HashSet<&str> = g.iter().map(String::as_str).collect();
        let hit = uniq.iter().filter(|id| got.contains(*id)).count();
        sum += hit as f64 / uniq.len() as f64;
        scored += 1;
    }
    RecallReport {
        recall: (scored > 0).then(|| sum / scored as f64),
        scored,
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AuditKey {
    pub question_id: String,
    pub step: usize,
    pub phase: AuditPhase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledAudit {
    #[serde(flatten)]
    pub key: AuditKey,
    pub stage: ErrorStage,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignmentError {
    #[error("audit {0:?} has no gold label")]
    MissingGold(AuditKey),
    #[error("gold audit {0:?} has no prediction")]
    MissingPrediction(AuditKey),
    #[error("audit {0:?} appears twice")]
    Duplicate(AuditKey),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionScores {
    pub precision: f64,
    pub recall: f64,
    pub detections: usize,
    pub true_errors: usize,
    pub correct: usize,
    /// Precision is reported as 1.0 because nothing was detected.
    pub no_detections: bool,
}

fn keyed(audits: &[LabeledAudit]) -> Result<BTreeMap<&AuditKey, ErrorStage>, AlignmentError> {
    let mut m = BTreeMap::new();
    for a in audits {
        if m.insert(&a.key, a.stage).is_some() {
            return Err(AlignmentError::Duplicate(a.key.clone()));
        }
    }
    Ok(m)
}

/// A detection is a non-none prediction; it is correct when it equals the gold stage.
pub fn inspection_precision_recall(
    predicted: &[LabeledAudit],
    gold: &[LabeledAudit],
) -> Result<InspectionScores, AlignmentError> {
    let p = keyed(predicted)?;
    let g = keyed(gold)?;
    if let Some(k) = p.keys().find(|k| !g.contains_key(*k)) {
        return Err(AlignmentError::MissingGold((*k).clone()));
    }
    if let Some(k) = g.keys().find(|k| !p.contains_key(*k)) {
        return Err(AlignmentError::MissingPrediction((*k).clone()));
    }
    let detections = p.values().filter(|s| s.is_error()).count();
    let true_errors = g.values().filter(|s| s.is_error()).count();
    let correct = p
        .iter()
        .filter(|(k, s)| s.is_error() && g[*k] == **s)
        .count();
    Ok(InspectionScores {
        precision: if detections == 0 { 1.0 } else { correct as f64 / detections as f64 },
        recall: if true_errors == 0 { 1.0 } else { correct as f64 / true_errors as f64 },
        detections,
        true_errors,
        correct,
        no_detections: detections == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseLatency {
    pub total_ms: u64,
    pub mean_ms: f64,
    pub count: usize,
}

/// Per event type durations. Uses payload `start_ms`/`end_ms` when present, otherwise
/// the gap to the next event (zero for the last one).
pub fn latency_breakdown(trace: &[TraceEvent]) -> BTreeMap<EventType, PhaseLatency> {
    let mut out: BTreeMap<EventType, PhaseLatency> = BTreeMap::new();
    for (i, e) in trace.iter().enumerate() {
        let field = |k: &str| e.payload.get(k).and_then(serde_json::Value::as_u64);
        let ms = match (field("start_ms"), field("end_ms")) {
            (Some(s), Some(t)) => t.saturating_sub(s),
            _ => trace
                .get(i + 1)
                .map_or(0, |n| n.ts_ms.saturating_sub(e.ts_ms)),
        };
        let entry = out.entry(e.event_type).or_insert(PhaseLatency {
            total_ms: 0,
            mean_ms: 0.0,
            count: 0,
        });
        entry.total_ms += ms;
        entry.count += 1;
    }
    for v in out.values_mut() {
        v.mean_ms = v.total_ms as f64 / v.count as f64;
    }
    out
}

/// Sums several breakdowns.
pub fn merge_latency<'a>(
    parts: impl IntoIterator<Item = &'a BTreeMap<EventType, PhaseLatency>>,
) -> BTreeMap<EventType, PhaseLatency> {
    let mut out: BTreeMap<EventType, PhaseLatency> = BTreeMap::new();
    for part in parts {
        for (k, v) in part {
            let e = out.entry(*k).or_insert(PhaseLatency {
                total_ms: 0,
                mean_ms: 0.0,
                count: 0,
            });
            e.total_ms += v.total_ms;
            e.count += v.count;
        }
    }
    for v in out.values_mut() {
        v.mean_ms = if v.count == 0 { 0.0 } else { v.total_ms as f64 / v.count as f64 };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub answer_aliases: Vec<String>,
    #[serde(default, rename = "type")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_support_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_hops: Option<usize>,
}

impl QARecord {
    /// Gold answer followed by its aliases.
    pub fn golds(&self) -> Vec<String> {
        std::iter::once(self.answer.clone())
            .chain(self.answer_aliases.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading dataset: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses JSONL records, one per non-blank line, rejecting empty answers.
pub fn parse_jsonl<T, F>(reader: impl BufRead, mut check: F) -> Result<Vec<T>, DatasetError>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(&T) -> Result<(), String>,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| DatasetError::Parse { line: i + 1, message };
        let rec: T = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        check(&rec).map_err(fail)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<QARecord>, DatasetError> {
    let file = std::fs::File::open(path)?;
    parse_jsonl(std::io::BufReader::new(file), |r: &QARecord| {
        if r.answer.trim().is_empty() {
            Err(format!("record {:?} has an empty answer", r.id))
        } else {
            Ok(())
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub em: f64,
    pub f1: f64,
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inspection_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inspection_recall: Option<f64>,
    pub latency_ms_by_phase: BTreeMap<EventType, PhaseLatency>,
}

impl MetricReport {
    /// EM and F1 means over `(prediction, golds)` pairs.
    pub fn from_answers(pairs: &[(String, Vec<String>)]) -> Self {
        let n = pairs.len();
        let (em, f1) = pairs.iter().fold((0.0, 0.0), |(em, f1), (p, g)| {
            (em + f64::from(u8::from(exact_match(p, g))), f1 + token_f1(p, g))
        });
        let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
        Self {
            n,
            em: mean(em),
            f1: mean(f1),
            failures: 0,
            retrieval_recall: None,
            inspection_precision: None,
            inspection_recall: None,
            latency_ms_by_phase: BTreeMap::new(),
        }
    }
}
