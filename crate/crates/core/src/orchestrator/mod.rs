//! Per-question control loop: plan, then for each hop guard, cache check, retrieval,
//! context audit and repair, solving, reasoning audit and repair, and memoization.

mod dataset;
mod judgment;
mod pipeline;

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, Role};
use crate::memoize::{EvidenceStore, RejectionPatterns, TraceError, TraceEvent, TrajectoryStore, DEFAULT_TAU};
use crate::protocol::{prompts, AuditDocument, SolverDocument};
use crate::retrieval::{DocumentPool, RetrievalEngine, RetrievalError};

pub use dataset::{run_dataset, DatasetRun, QuestionOutcome, ResultLine, StepStats};
pub use judgment::{
    compare_answers, default_missing_evidence, execution_guard, key_entities, looks_missing_evidence,
    AnswerChoice, DEFAULT_MISSING_EVIDENCE,
};
pub use pipeline::run_question;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Context-phase expansion budget per hop.
    pub e_r: usize,
    /// Post-solve expansion budget per hop.
    pub e_p: usize,
    /// Pool cap.
    pub k_max: usize,
    /// Documents handed to the solver.
    pub k_solve: usize,
    pub tau: f64,
    pub ctx_doc_limit: usize,
    pub rea_doc_limit: usize,
    pub doc_char_limit: usize,
    pub memoize_on: bool,
    pub context_inspector_on: bool,
    pub reasoning_inspector_on: bool,
    pub planner_on: bool,
    /// Share one evidence cache across questions.
    pub global_cache: bool,
    pub deadline_secs: u64,
    /// Added to the built-in refusal phrases.
    pub extra_rejections: Vec<String>,
    pub missing_evidence_phrases: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            e_r: 3,
            e_p: 3,
            k_max: 25,
            k_solve: 10,
            tau: DEFAULT_TAU,
            ctx_doc_limit: 20,
            rea_doc_limit: 25,
            doc_char_limit: 900,
            memoize_on: true,
            context_inspector_on: true,
            reasoning_inspector_on: true,
            planner_on: true,
            global_cache: false,
            deadline_secs: 300,
            extra_rejections: Vec::new(),
            missing_evidence_phrases: default_missing_evidence(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k_solve == 0 || self.k_solve > self.k_max {
            return Err(format!("need 1 <= k_solve <= k_max, got {} and {}", self.k_solve, self.k_max));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("tau {} outside (0, 1]", self.tau));
        }
        if self.deadline_secs == 0 {
            return Err("deadline_secs must be positive".into());
        }
        Ok(())
    }

    pub fn rejections(&self) -> RejectionPatterns {
        RejectionPatterns::default().with_extra(self.extra_rejections.iter().cloned())
    }
}

/// System prompts per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub planner: String,
    pub solver: String,
    pub context_inspector: String,
    pub reasoning_inspector: String,
    pub subq_rewriter: String,
    pub query_rewriter: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            planner: prompts::PLANNER.into(),
            solver: prompts::SOLVER.into(),
            context_inspector: prompts::CONTEXT_INSPECTOR.into(),
            reasoning_inspector: prompts::REASONING_INSPECTOR.into(),
            subq_rewriter: prompts::SUBQUESTION_REWRITER.into(),
            query_rewriter: prompts::QUERY_REWRITER.into(),
        }
    }
}

impl Prompts {
    pub fn for_role(&self, role: Role) -> &str {
        match role {
            Role::Planner => &self.planner,
            Role::Solver => &self.solver,
            Role::ContextInspector => &self.context_inspector,
            Role::ReasoningInspector => &self.reasoning_inspector,
            Role::SubqRewriter => &self.subq_rewriter,
            Role::QueryRewriter => &self.query_rewriter,
            Role::Judge => prompts::JUDGE,
            Role::Teacher => prompts::TEACHER,
        }
    }
}

/// Everything a question run needs. Cheap to share across threads.
#[derive(Clone)]
pub struct Deps {
    pub gateway: Arc<Gateway>,
    pub retrieval: Arc<RetrievalEngine>,
    pub config: PipelineConfig,
    pub prompts: Prompts,
    pub traces: TrajectoryStore,
    /// Present in global-cache mode.
    pub shared_cache: Option<Arc<Mutex<EvidenceStore>>>,
}

impl Deps {
    pub fn new(gateway: Arc<Gateway>, retrieval: Arc<RetrievalEngine>, config: PipelineConfig) -> Self {
        let shared_cache = config
            .global_cache
            .then(|| Arc::new(Mutex::new(EvidenceStore::new())));
        Self {
            gateway,
            retrieval,
            config,
            prompts: Prompts::default(),
            traces: TrajectoryStore::in_memory(),
            shared_cache,
        }
    }

    pub fn with_traces(mut self, traces: TrajectoryStore) -> Self {
        self.traces = traces;
        self
    }

    pub fn with_prompts(mut self, prompts: Prompts) -> Self {
        self.prompts = prompts;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairCounts {
    /// Rewrites forced by the cascade guard (at most one).
    pub guard_rewrites: usize,
    /// Rewrites requested by the context inspector (at most one).
    pub subq_rewrites: usize,
    pub ctx_expansions: usize,
    pub posthoc_expansions: usize,
    pub solver_retries: usize,
}

impl RepairCounts {
    pub fn within(&self, cfg: &PipelineConfig) -> bool {
        self.guard_rewrites <= 1
            && self.subq_rewrites <= 1
            && self.ctx_expansions <= cfg.e_r
            && self.posthoc_expansions <= cfg.e_p
            && self.solver_retries <= 1
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub index: usize,
    /// Subquestion as planned, placeholders unfilled.
    pub subquestion_raw: String,
    /// Subquestion actually executed, after rewrites and filling.
    pub subquestion: String,
    pub pool: DocumentPool,
    pub solver_doc_ids: Vec<String>,
    pub audits: Vec<AuditDocument>,
    pub solver_outputs: Vec<SolverDocument>,
    pub chosen_answer: String,
    pub cache_hit: bool,
    pub blocked: bool,
    pub repair_counts: RepairCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalResult {
    pub question_id: String,
    pub question: String,
    pub subquestions: Vec<String>,
    /// Chosen answer of the last step.
    pub final_answer: String,
    pub steps: Vec<StepRecord>,
    pub trace_path: Option<PathBuf>,
    #[serde(skip)]
    pub trace: Vec<TraceEvent>,
}

impl FinalResult {
    /// Ids of every pooled or solver document across all steps, first-seen order.
    pub fn retrieved_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.steps
            .iter()
            .flat_map(|s| s.pool.ids().into_iter().chain(s.solver_doc_ids.iter().cloned()))
            .filter(|id| seen.insert(id.clone()))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{role} call failed: {source}")]
    Gateway {
        role: Role,
        #[source]
        source: GatewayError,
    },
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("trace write failed: {0}")]
    Trace(#[from] TraceError),
    #[error("cache embedding failed: {0}")]
    Cache(String),
    #[error("deadline of {0}s exceeded")]
    Deadline(u64),
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

/// A question that did not finish; its partial trace ends with an `error` event.
#[derive(Debug)]
pub struct QuestionFailure {
    pub question_id: String,
    pub error: PipelineError,
    pub trace_path: Option<PathBuf>,
    pub trace: Vec<TraceEvent>,
}

impl std::fmt::Display for QuestionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "question {}: {}", self.question_id, self.error)
    }
}

impl std::error::Error for QuestionFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}
