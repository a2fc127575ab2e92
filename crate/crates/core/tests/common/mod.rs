#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use hoprag::gateway::{load_script, parse_script, ChatBackend, Gateway, ScriptedBackend};
use hoprag::memoize::{EventType, TraceEvent};
use hoprag::orchestrator::{Deps, PipelineConfig};
use hoprag::retrieval::{load_corpus, CascadeConfig, HashingEmbedder, RetrievalEngine};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn engine() -> Arc<RetrievalEngine> {
    let corpus = load_corpus(fixture("corpus.jsonl")).unwrap();
    Arc::new(RetrievalEngine::from_corpus(corpus, Arc::new(HashingEmbedder::default()), CascadeConfig::default()).unwrap())
}

pub fn scripted(name: &str) -> Arc<Gateway> {
    let script = Arc::new(load_script(fixture(name)).unwrap());
    Arc::new(Gateway::uniform(Arc::new(ScriptedBackend::new(script))))
}

pub fn scripted_text(text: &str) -> Arc<Gateway> {
    let script = Arc::new(parse_script(text).unwrap());
    Arc::new(Gateway::uniform(Arc::new(ScriptedBackend::new(script))))
}

pub fn backend_gateway(backend: Arc<dyn ChatBackend>) -> Arc<Gateway> {
    Arc::new(Gateway::uniform(backend))
}

pub fn deps(gateway: Arc<Gateway>, config: PipelineConfig) -> Deps {
    Deps::new(gateway, engine(), config)
}

pub fn count(trace: &[TraceEvent], ty: EventType) -> usize {
    trace.iter().filter(|e| e.event_type == ty).count()
}

pub fn types(trace: &[TraceEvent]) -> Vec<EventType> {
    trace.iter().map(|e| e.event_type).collect()
}

/// Event fields with wall-clock values removed.
pub fn strip_times(trace: &[TraceEvent]) -> Vec<serde_json::Value> {
    trace
        .iter()
        .map(|e| {
            let mut v = serde_json::to_value(e).unwrap();
            v.as_object_mut().unwrap().remove("ts_ms");
            if let Some(p) = v.get_mut("payload").and_then(|p| p.as_object_mut()) {
                p.remove("start_ms");
                p.remove("end_ms");
            }
            v
        })
        .collect()
}

pub const T7_QUESTION: &str =
    "What is the birth year of the director who won Best Picture for a film about a Korean family?";
pub const T8_QUESTION: &str =
    "Who was the spouse of the actor who played the main character in The Godfather Part III?";

pub fn audit(stage: &str, explanation: &str) -> String {
    format!("<error_stage>{stage}</error_stage>\n<explanation>{explanation}</explanation>")
}

pub fn solver(answer: &str) -> String {
    format!("<reasoning>From [Doc_1].</reasoning>\n<sources>[Doc_1]</sources>\n<answer>{answer}</answer>")
}

pub fn plan(subs: &[&str]) -> String {
    let body: Vec<String> = subs.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect();
    format!("<reasoning>r</reasoning>\n<subquestions>\n{}\n</subquestions>", body.join("\n"))
}

pub mod reference;
pub mod synthetic;

/// Retry events of one kind per step, read back from a trace.
pub fn retries_per_step(trace: &[TraceEvent], kind: &str) -> std::collections::BTreeMap<u64, usize> {
    let mut out = std::collections::BTreeMap::new();
    for e in trace.iter().filter(|e| e.event_type == EventType::Retry) {
        if e.payload["kind"] == kind {
            *out.entry(e.payload["step"].as_u64().unwrap()).or_insert(0) += 1;
        }
    }
    out
}

/// Checks every repair budget and the pool cap against a trace. Returns the first
/// violation found.
pub fn budget_violation(trace: &[TraceEvent], cfg: &PipelineConfig) -> Option<String> {
    let limits = [
        ("guard_rewrite", 1),
        ("subquestion_rewrite", 1),
        ("ctx_expansion", cfg.e_r),
        ("posthoc_expansion", cfg.e_p),
        ("solver_retry", 1),
    ];
    for (kind, limit) in limits {
        if let Some((step, n)) = retries_per_step(trace, kind).into_iter().find(|(_, n)| *n > limit) {
            return Some(format!("{kind}: {n} at step {step}, limit {limit}"));
        }
    }
    for e in trace.iter().filter(|e| e.event_type == EventType::Solve) {
        let n = e.payload["doc_ids"].as_array().map_or(0, Vec::len);
        if n > cfg.k_max {
            return Some(format!("solver saw {n} docs, cap {}", cfg.k_max));
        }
    }
    None
}
