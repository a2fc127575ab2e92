use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::judgment::{compare_answers, execution_guard, looks_missing_evidence, AnswerChoice};
use super::{Deps, FinalResult, PipelineConfig, PipelineError, QuestionFailure, RepairCounts, StepRecord};
use crate::gateway::{ChatRequest, Role};
use crate::memoize::{
    cascade_guard, now_ms, EventType, EvidenceStore, RejectionPatterns, Trajectory, REFUSAL,
};
use crate::protocol::{
    fill_placeholders, parse_audit, parse_plan, parse_rewrite, parse_solver_output, prompts, AuditDocument,
    AuditPhase, ErrorStage, RewriteKind, SolverDocument,
};
use crate::retrieval::{DocumentPool, ScoredPassage};

static SESSIONS: AtomicU64 = AtomicU64::new(1);

struct Timed<T> {
    value: T,
    start_ms: u64,
    end_ms: u64,
}

struct AuditCall {
    audit: AuditDocument,
    raw: String,
    parsed: bool,
    start_ms: u64,
    end_ms: u64,
}

struct SolveCall {
    doc: SolverDocument,
    raw: String,
}

struct Run<'a> {
    deps: &'a Deps,
    cfg: &'a PipelineConfig,
    qid: &'a str,
    question: &'a str,
    session: u64,
    trace: Trajectory,
    deadline: Instant,
    rejections: RejectionPatterns,
    local_cache: EvidenceStore,
}

fn ids(passages: &[ScoredPassage]) -> Vec<String> {
    passages.iter().map(|p| p.passage_id.clone()).collect()
}

fn with_timing(mut payload: Value, start_ms: u64, end_ms: u64) -> Value {
    if let Value::Object(m) = &mut payload {
        m.insert("start_ms".into(), start_ms.into());
        m.insert("end_ms".into(), end_ms.into());
    }
    payload
}

impl<'a> Run<'a> {
    fn check_deadline(&self) -> Result<(), PipelineError> {
        if Instant::now() > self.deadline {
            Err(PipelineError::Deadline(self.cfg.deadline_secs))
        } else {
            Ok(())
        }
    }

    fn event(&mut self, ty: EventType, parent: Option<u64>, payload: Value) -> Result<u64, PipelineError> {
        Ok(self.trace.append_event(ty, parent, payload)?)
    }

    fn chat(&mut self, role: Role, user: String) -> Result<Timed<String>, PipelineError> {
        self.check_deadline()?;
        let req = ChatRequest::new(role, self.deps.prompts.for_role(role), user).with_session(self.qid, self.session);
        let start_ms = now_ms();
        let resp = self
            .deps
            .gateway
            .complete(&req)
            .map_err(|source| PipelineError::Gateway { role, source })?;
        Ok(Timed {
            value: resp.text,
            start_ms,
            end_ms: now_ms().max(start_ms),
        })
    }

    fn passage_texts(&self, doc_ids: &[String]) -> Vec<(String, String)> {
        let index = self.deps.retrieval.index();
        doc_ids
            .iter()
            .filter_map(|id| index.passage(id))
            .map(|p| (p.title.clone(), p.body.clone()))
            .collect()
    }

    fn docs_prompt(&self, doc_ids: &[String], limit: usize) -> String {
        let texts = self.passage_texts(doc_ids);
        let docs: Vec<prompts::PromptDoc<'_>> = texts
            .iter()
            .map(|(t, b)| prompts::PromptDoc { title: t, text: b })
            .collect();
        prompts::format_docs(&docs, limit, self.cfg.doc_char_limit)
    }

    fn doc_bodies(&self, doc_ids: &[String]) -> Vec<String> {
        self.passage_texts(doc_ids)
            .into_iter()
            .map(|(t, b)| format!("{t}\n{b}"))
            .collect()
    }

    fn retrieve(
        &mut self,
        step: usize,
        query: &str,
        purpose: &str,
        parent: Option<u64>,
    ) -> Result<Vec<ScoredPassage>, PipelineError> {
        self.check_deadline()?;
        let start_ms = now_ms();
        let out = self.deps.retrieval.retrieve(query)?;
        let end_ms = now_ms().max(start_ms);
        self.event(
            EventType::Retrieve,
            parent,
            with_timing(
                json!({
                    "step": step,
                    "purpose": purpose,
                    "query": query,
                    "doc_ids": ids(&out.passages),
                    "stage_sizes": out.stage_sizes,
                }),
                start_ms,
                end_ms,
            ),
        )?;
        Ok(out.passages)
    }

    fn audit(&mut self, step: usize, phase: AuditPhase, role: Role, user: String) -> Result<AuditCall, PipelineError> {
        let call = self.chat(role, user)?;
        let (audit, parsed) = match parse_audit(&call.value, phase) {
            Ok(a) => (a, true),
            Err(e) => {
                self.event(
                    EventType::Error,
                    None,
                    json!({"step": step, "kind": "audit_parse", "phase": phase, "message": e.to_string(), "raw": call.value}),
                )?;
                let fallback = AuditDocument {
                    phase,
                    error_stage: ErrorStage::None,
                    explanation: String::new(),
                    action: None,
                };
                (fallback, false)
            }
        };
        Ok(AuditCall {
            audit,
            raw: call.value,
            parsed,
            start_ms: call.start_ms,
            end_ms: call.end_ms,
        })
    }

    fn rewrite(
        &mut self,
        step: usize,
        kind: RewriteKind,
        user: String,
        fallback: &str,
    ) -> Result<Timed<String>, PipelineError> {
        let role = match kind {
            RewriteKind::Subquestion => Role::SubqRewriter,
            RewriteKind::Query => Role::QueryRewriter,
        };
        let call = self.chat(role, user)?;
        let value = match parse_rewrite(&call.value, kind) {
            Ok(r) => r.text,
            Err(e) => {
                self.event(
                    EventType::Error,
                    None,
                    json!({"step": step, "kind": "rewrite_parse", "message": e.to_string(), "raw": call.value}),
                )?;
                fallback.to_string()
            }
        };
        Ok(Timed {
            value,
            start_ms: call.start_ms,
            end_ms: call.end_ms,
        })
    }

    fn inspect_context(
        &mut self,
        step: usize,
        subq: &str,
        pool: &DocumentPool,
        answers: &[String],
    ) -> Result<(AuditDocument, u64), PipelineError> {
        let shown: Vec<String> = pool.ids().into_iter().take(self.cfg.ctx_doc_limit).collect();
        let user = prompts::context_inspector_user(
            self.question,
            subq,
            &prompts::format_answers(answers),
            &self.docs_prompt(&shown, self.cfg.ctx_doc_limit),
        );
        let c = self.audit(step, AuditPhase::Context, Role::ContextInspector, user)?;
        let id = self.event(
            EventType::InspectContext,
            None,
            with_timing(
                json!({
                    "step": step,
                    "phase": AuditPhase::Context,
                    "subquestion": subq,
                    "doc_ids": shown,
                    "stage": c.audit.error_stage,
                    "explanation": c.audit.explanation,
                    "parsed": c.parsed,
                    "raw": c.raw,
                }),
                c.start_ms,
                c.end_ms,
            ),
        )?;
        Ok((c.audit, id))
    }

    #[allow(clippy::too_many_arguments)]
    fn solve(
        &mut self,
        step: usize,
        subq: &str,
        doc_ids: &[String],
        feedback: Option<(&str, &str)>,
        parent: Option<u64>,
    ) -> Result<SolveCall, PipelineError> {
        let docs = self.docs_prompt(doc_ids, doc_ids.len());
        let user = match feedback {
            None => prompts::solver_user(subq, &docs),
            Some((prev, fb)) => prompts::solver_feedback_user(subq, &docs, prev, fb),
        };
        let call = self.chat(Role::Solver, user)?;
        let doc = match parse_solver_output(&call.value) {
            Ok(d) => d,
            Err(e) => {
                self.event(
                    EventType::Error,
                    None,
                    json!({"step": step, "kind": "solver_parse", "message": e.to_string(), "raw": call.value}),
                )?;
                SolverDocument {
                    reasoning: String::new(),
                    sources: Vec::new(),
                    answer: String::new(),
                }
            }
        };
        self.event(
            EventType::Solve,
            parent,
            with_timing(
                json!({
                    "step": step,
                    "subquestion": subq,
                    "doc_ids": doc_ids,
                    "retry": feedback.is_some(),
                    "raw": call.value,
                    "reasoning": doc.reasoning,
                    "sources": doc.sources,
                    "answer": doc.answer,
                }),
                call.start_ms,
                call.end_ms,
            ),
        )?;
        Ok(SolveCall { doc, raw: call.value })
    }

    fn reasoning_call(
        &mut self,
        step: usize,
        subq: &str,
        doc_ids: &[String],
        exec: &SolveCall,
    ) -> Result<(AuditCall, Vec<String>), PipelineError> {
        let shown: Vec<String> = doc_ids.iter().take(self.cfg.rea_doc_limit).cloned().collect();
        let user = prompts::reasoning_inspector_user(
            self.question,
            subq,
            &self.docs_prompt(&shown, self.cfg.rea_doc_limit),
            &exec.raw,
            &exec.doc.answer,
        );
        Ok((self.audit(step, AuditPhase::Reasoning, Role::ReasoningInspector, user)?, shown))
    }

    fn reason_event(
        &mut self,
        step: usize,
        subq: &str,
        call: &AuditCall,
        shown: &[String],
        extra: Value,
    ) -> Result<u64, PipelineError> {
        let mut payload = json!({
            "step": step,
            "phase": AuditPhase::Reasoning,
            "subquestion": subq,
            "doc_ids": shown,
            "stage": call.audit.error_stage,
            "explanation": call.audit.explanation,
            "parsed": call.parsed,
            "raw": call.raw,
        });
        if let (Value::Object(m), Value::Object(x)) = (&mut payload, extra) {
            m.extend(x);
        }
        self.event(EventType::InspectReason, None, with_timing(payload, call.start_ms, call.end_ms))
    }

    fn cache_lookup(&mut self, subq: &str) -> Result<Option<crate::memoize::CacheHit>, PipelineError> {
        let embedder = self.deps.retrieval.embedder();
        let res = match &self.deps.shared_cache {
            Some(shared) => shared
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .lookup(subq, self.cfg.tau, embedder),
            None => self.local_cache.lookup(subq, self.cfg.tau, embedder),
        };
        res.map_err(|e| PipelineError::Cache(e.0))
    }

    fn cache_store(&mut self, subq: &str, answer: &str) -> Result<(), PipelineError> {
        let embedder = self.deps.retrieval.embedder();
        let res = match &self.deps.shared_cache {
            Some(shared) => shared
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .store_answer(subq, answer, embedder),
            None => self.local_cache.store_answer(subq, answer, embedder),
        };
        res.map_err(|e| PipelineError::Cache(e.0))
    }

    fn plan(&mut self) -> Result<Vec<String>, PipelineError> {
        if !self.cfg.planner_on {
            let subs = vec![self.question.to_string()];
            let t = now_ms();
            self.event(
                EventType::Plan,
                None,
                with_timing(json!({"planner": false, "question": self.question, "raw": "", "subquestions": subs}), t, t),
            )?;
            return Ok(subs);
        }
        let call = self.chat(Role::Planner, prompts::planner_user(self.question))?;
        let subs = match parse_plan(&call.value) {
            Ok(p) => p.subquestions,
            Err(e) => {
                self.event(
                    EventType::Error,
                    None,
                    json!({"kind": "plan_parse", "message": e.to_string(), "raw": call.value}),
                )?;
                vec![self.question.to_string()]
            }
        };
        self.event(
            EventType::Plan,
            None,
            with_timing(
                json!({"planner": true, "question": self.question, "raw": call.value, "subquestions": subs}),
                call.start_ms,
                call.end_ms,
            ),
        )?;
        Ok(subs)
    }

    fn run(&mut self, steps: &mut Vec<StepRecord>) -> Result<Vec<String>, PipelineError> {
        let subquestions = self.plan()?;
        let mut answers: Vec<String> = Vec::new();
        for (step, raw) in subquestions.iter().enumerate() {
            let record = self.run_step(step, raw, &answers)?;
            let blocked = record.blocked;
            answers.push(record.chosen_answer.clone());
            steps.push(record);
            if blocked {
                break;
            }
        }
        Ok(subquestions)
    }

    fn empty_record(step: usize, raw: &str, subq: &str, k_max: usize) -> StepRecord {
        StepRecord {
            index: step,
            subquestion_raw: raw.to_string(),
            subquestion: subq.to_string(),
            pool: DocumentPool::new(k_max),
            solver_doc_ids: Vec::new(),
            audits: Vec::new(),
            solver_outputs: Vec::new(),
            chosen_answer: String::new(),
            cache_hit: false,
            blocked: false,
            repair_counts: RepairCounts::default(),
        }
    }

    fn run_step(&mut self, step: usize, raw: &str, answers: &[String]) -> Result<StepRecord, PipelineError> {
        let cfg = self.cfg;
        let mut counts = RepairCounts::default();
        let mut s = raw.to_string();

        // cascade guard: one rewrite, then block
        let verdict = cascade_guard(&s, answers, &self.rejections);
        if !verdict.is_ok() {
            let feedback = format!(
                "The subquestion depends on rejected or missing answers {:?}; rewrite it so it does not.",
                verdict
                    .offending_indices
                    .iter()
                    .map(|i| format!("[ANSWER_{i}]"))
                    .collect::<Vec<_>>()
            );
            let user = prompts::subquestion_rewriter_user(self.question, &s, &feedback, &prompts::format_answers(answers));
            let rw = self.rewrite(step, RewriteKind::Subquestion, user, &s)?;
            counts.guard_rewrites = 1;
            self.event(
                EventType::Retry,
                None,
                with_timing(
                    json!({"step": step, "kind": "guard_rewrite", "offending": verdict.offending_indices, "subquestion": rw.value}),
                    rw.start_ms,
                    rw.end_ms,
                ),
            )?;
            s = rw.value;
            let again = cascade_guard(&s, answers, &self.rejections);
            if !again.is_ok() {
                let blocked = again.blocked();
                self.event(
                    EventType::Error,
                    None,
                    json!({"step": step, "kind": "guard_blocked", "offending": blocked.offending_indices, "answer": REFUSAL}),
                )?;
                let mut rec = Self::empty_record(step, raw, &s, cfg.k_max);
                rec.chosen_answer = REFUSAL.to_string();
                rec.blocked = true;
                rec.repair_counts = counts;
                return Ok(rec);
            }
        }
        // guard ok guarantees every placeholder resolves
        let mut s = fill_placeholders(&s, answers).unwrap_or(s);
        let mut rec = Self::empty_record(step, raw, &s, cfg.k_max);

        if cfg.memoize_on {
            let t0 = now_ms();
            if let Some(hit) = self.cache_lookup(&s)? {
                self.event(
                    EventType::CacheHit,
                    None,
                    with_timing(
                        json!({
                            "step": step,
                            "subquestion": s,
                            "matched": hit.matched_subquestion,
                            "similarity": hit.similarity,
                            "answer": hit.answer,
                        }),
                        t0,
                        now_ms().max(t0),
                    ),
                )?;
                rec.chosen_answer = hit.answer;
                rec.cache_hit = true;
                return Ok(rec);
            }
        }

        let initial = self.retrieve(step, &s, "initial", None)?;
        let mut pool = DocumentPool::from_initial(initial, cfg.k_max);
        let merge = self.deps.retrieval.config().merge_strategy;
        let mut ctx_stage = ErrorStage::None;

        if cfg.context_inspector_on {
            let (mut audit, mut ctx_id) = self.inspect_context(step, &s, &pool, answers)?;
            rec.audits.push(audit.clone());
            if audit.error_stage == ErrorStage::Subquestion {
                let user = prompts::subquestion_rewriter_user(
                    self.question,
                    &s,
                    &audit.explanation,
                    &prompts::format_answers(answers),
                );
                let rw = self.rewrite(step, RewriteKind::Subquestion, user, &s)?;
                counts.subq_rewrites = 1;
                let rewritten = match fill_placeholders(&rw.value, answers) {
                    Ok(t) if !t.trim().is_empty() => t,
                    _ => s.clone(),
                };
                let retry_id = self.event(
                    EventType::Retry,
                    Some(ctx_id),
                    with_timing(
                        json!({"step": step, "kind": "subquestion_rewrite", "subquestion": rewritten}),
                        rw.start_ms,
                        rw.end_ms,
                    ),
                )?;
                s = rewritten;
                let fresh = self.retrieve(step, &s, "subquestion_rewrite", Some(retry_id))?;
                pool = DocumentPool::from_initial(fresh, cfg.k_max);
                (audit, ctx_id) = self.inspect_context(step, &s, &pool, answers)?;
                rec.audits.push(audit.clone());
            }
            while audit.error_stage == ErrorStage::Retrieval && counts.ctx_expansions < cfg.e_r {
                let user = prompts::query_rewriter_user(self.question, &s, &audit.explanation);
                let rw = self.rewrite(step, RewriteKind::Query, user, &s)?;
                counts.ctx_expansions += 1;
                let retry_id = self.event(
                    EventType::Retry,
                    Some(ctx_id),
                    with_timing(
                        json!({"step": step, "kind": "ctx_expansion", "round": counts.ctx_expansions, "query": rw.value}),
                        rw.start_ms,
                        rw.end_ms,
                    ),
                )?;
                let more = self.retrieve(step, &rw.value, "ctx_expansion", Some(retry_id))?;
                pool.merge(more, merge);
                (audit, ctx_id) = self.inspect_context(step, &s, &pool, answers)?;
                rec.audits.push(audit.clone());
            }
            ctx_stage = audit.error_stage;
        }
        rec.subquestion = s.clone();

        let retries_exhausted =
            cfg.e_r > 0 && counts.ctx_expansions >= cfg.e_r && ctx_stage == ErrorStage::Retrieval;
        let mut docs = DocumentPool::from_selection(pool.select(cfg.k_solve, retries_exhausted), cfg.k_max);
        let mut exec = self.solve(step, &s, &docs.ids(), None, None)?;
        rec.solver_outputs.push(exec.doc.clone());
        let mut answer = exec.doc.answer.clone();

        if cfg.reasoning_inspector_on {
            let (call, shown) = self.reasoning_call(step, &s, &docs.ids(), &exec)?;
            let mut audit = call.audit.clone();
            let mut extra = json!({});
            if audit.error_stage == ErrorStage::None {
                let bodies = self.doc_bodies(&docs.ids());
                let refs: Vec<&str> = bodies.iter().map(String::as_str).collect();
                if let Some(o) = execution_guard(&s, &answer, &refs, &self.rejections) {
                    extra = json!({"guard_override": {"stage": o.error_stage, "explanation": o.explanation}});
                    audit = o;
                }
            }
            let mut rea_id = self.reason_event(step, &s, &call, &shown, extra)?;
            rec.audits.push(call.audit);
            if audit != *rec.audits.last().expect("just pushed") {
                rec.audits.push(audit.clone());
            }

            while audit.error_stage == ErrorStage::Reasoning
                && looks_missing_evidence(&audit, &cfg.missing_evidence_phrases)
                && counts.posthoc_expansions < cfg.e_p
            {
                let user = prompts::query_rewriter_user(self.question, &s, &audit.explanation);
                let rw = self.rewrite(step, RewriteKind::Query, user, &s)?;
                counts.posthoc_expansions += 1;
                let retry_id = self.event(
                    EventType::Retry,
                    Some(rea_id),
                    with_timing(
                        json!({"step": step, "kind": "posthoc_expansion", "round": counts.posthoc_expansions, "query": rw.value}),
                        rw.start_ms,
                        rw.end_ms,
                    ),
                )?;
                let more = self.retrieve(step, &rw.value, "posthoc_expansion", Some(retry_id))?;
                docs.merge(more, merge);
                exec = self.solve(step, &s, &docs.ids(), None, Some(retry_id))?;
                rec.solver_outputs.push(exec.doc.clone());
                answer = exec.doc.answer.clone();
                let (call, shown) = self.reasoning_call(step, &s, &docs.ids(), &exec)?;
                audit = call.audit.clone();
                rea_id = self.reason_event(step, &s, &call, &shown, json!({}))?;
                rec.audits.push(call.audit);
            }

            if matches!(audit.error_stage, ErrorStage::Reasoning | ErrorStage::Extraction) {
                counts.solver_retries = 1;
                let feedback = format!("{}: {}", audit.error_stage, audit.explanation);
                let t0 = now_ms();
                let retry_id = self.event(
                    EventType::Retry,
                    Some(rea_id),
                    with_timing(json!({"step": step, "kind": "solver_retry", "feedback": feedback}), t0, t0),
                )?;
                let prev = exec.raw.clone();
                let retry = self.solve(step, &s, &docs.ids(), Some((&prev, &feedback)), Some(retry_id))?;
                rec.solver_outputs.push(retry.doc.clone());
                let (call, shown) = self.reasoning_call(step, &s, &docs.ids(), &retry)?;
                let bodies = self.doc_bodies(&docs.ids());
                let refs: Vec<&str> = bodies.iter().map(String::as_str).collect();
                let (choice, reason) = compare_answers(&retry.doc.answer, &call.audit, &s, &refs, &self.rejections);
                if choice == AnswerChoice::Retry {
                    answer = retry.doc.answer.clone();
                }
                self.reason_event(
                    step,
                    &s,
                    &call,
                    &shown,
                    json!({
                        "retry_audit": true,
                        "selection": {
                            "chosen": choice,
                            "reason": reason,
                            "original": exec.doc.answer,
                            "retry": retry.doc.answer,
                            "answer": answer,
                        }
                    }),
                )?;
                rec.audits.push(call.audit);
            }
        }

        if cfg.memoize_on {
            self.cache_store(&s, &answer)?;
        }
        rec.pool = pool;
        rec.solver_doc_ids = docs.ids();
        rec.chosen_answer = answer;
        rec.repair_counts = counts;
        debug_assert!(counts.within(cfg));
        Ok(rec)
    }
}

/// Runs the full control loop for one question. On failure the partial trace ends
/// with an `error` event.
pub fn run_question(question_id: &str, question: &str, deps: &Deps) -> Result<FinalResult, QuestionFailure> {
    let fail = |error: PipelineError, trace: Option<Trajectory>| QuestionFailure {
        question_id: question_id.to_string(),
        error,
        trace_path: deps.traces.path_for(question_id),
        trace: trace.map(|t| t.events().to_vec()).unwrap_or_default(),
    };
    if let Err(e) = deps.config.validate() {
        return Err(fail(PipelineError::Config(e), None));
    }
    let trace = match deps.traces.open(question_id) {
        Ok(t) => t,
        Err(e) => return Err(fail(e.into(), None)),
    };
    let mut run = Run {
        deps,
        cfg: &deps.config,
        qid: question_id,
        question,
        session: SESSIONS.fetch_add(1, Ordering::Relaxed),
        trace,
        deadline: Instant::now() + Duration::from_secs(deps.config.deadline_secs),
        rejections: deps.config.rejections(),
        local_cache: EvidenceStore::for_question(question_id),
    };
    let mut steps = Vec::new();
    match run.run(&mut steps) {
        Ok(subquestions) => {
            let final_answer = steps.last().map(|s| s.chosen_answer.clone()).unwrap_or_default();
            run.local_cache.clear();
            Ok(FinalResult {
                question_id: question_id.to_string(),
                question: question.to_string(),
                subquestions,
                final_answer,
                steps,
                trace_path: run.trace.path().map(|p| p.to_path_buf()),
                trace: run.trace.events().to_vec(),
            })
        }
        Err(error) => {
            let _ = run.trace.append_event(
                EventType::Error,
                run.trace.last_id(),
                json!({"kind": "fatal", "step": steps.len(), "message": error.to_string()}),
            );
            Err(fail(error, Some(run.trace)))
        }
    }
}
