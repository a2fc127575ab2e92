use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pipeline::run_question, Deps, FinalResult, QuestionFailure, RepairCounts};
use crate::eval::{exact_match, latency_breakdown, merge_latency, retrieval_recall, token_f1, MetricReport, QARecord};

#[derive(Debug)]
pub struct QuestionOutcome {
    pub question_id: String,
    pub result: Result<FinalResult, QuestionFailure>,
    pub em: bool,
    pub f1: f64,
}

impl QuestionOutcome {
    pub fn final_answer(&self) -> &str {
        self.result.as_ref().map_or("", |r| r.final_answer.as_str())
    }

    pub fn trace(&self) -> &[crate::memoize::TraceEvent] {
        match &self.result {
            Ok(r) => &r.trace,
            Err(f) => &f.trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub subquestion: String,
    pub answer: String,
    pub cache_hit: bool,
    pub blocked: bool,
    pub repair_counts: RepairCounts,
    pub retrieved_ids: Vec<String>,
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub question_id: String,
    pub final_answer: String,
    pub em: f64,
    pub f1: f64,
    pub step_stats: Vec<StepStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&QuestionOutcome> for ResultLine {
    fn from(o: &QuestionOutcome) -> Self {
        let (step_stats, error) = match &o.result {
            Ok(r) => (
                r.steps
                    .iter()
                    .map(|s| StepStats {
                        subquestion: s.subquestion.clone(),
                        answer: s.chosen_answer.clone(),
                        cache_hit: s.cache_hit,
                        blocked: s.blocked,
                        repair_counts: s.repair_counts,
                        retrieved_ids: s.pool.ids(),
                    })
                    .collect(),
                None,
            ),
            Err(f) => (Vec::new(), Some(f.error.to_string())),
        };
        Self {
            question_id: o.question_id.clone(),
            final_answer: o.final_answer().to_string(),
            em: f64::from(u8::from(o.em)),
            f1: o.f1,
            step_stats,
            error,
        }
    }
}

#[derive(Debug)]
pub struct DatasetRun {
    /// Same order as the input dataset.
    pub outcomes: Vec<QuestionOutcome>,
    pub report: MetricReport,
}

/// Runs every record with at most `parallelism` concurrent questions. Failures are
/// recorded per question and scored as wrong.
pub fn run_dataset(records: &[QARecord], deps: &Deps, parallelism: usize) -> DatasetRun {
    let one = |r: &QARecord| {
        let result = run_question(&r.id, &r.question, deps);
        let golds = r.golds();
        let (em, f1) = match &result {
            Ok(res) => (exact_match(&res.final_answer, &golds), token_f1(&res.final_answer, &golds)),
            Err(_) => (false, 0.0),
        };
        QuestionOutcome {
            question_id: r.id.clone(),
            result,
            em,
            f1,
        }
    };
    let outcomes: Vec<QuestionOutcome> = if parallelism <= 1 {
        records.iter().map(one).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
            Ok(pool) => pool.install(|| records.par_iter().map(one).collect()),
            Err(_) => records.iter().map(one).collect(),
        }
    };

    let n = outcomes.len();
    let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    let retrieved: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| o.result.as_ref().map(FinalResult::retrieved_ids).unwrap_or_default())
        .collect();
    let gold: Vec<Option<Vec<String>>> = records.iter().map(|r| r.gold_support_ids.clone()).collect();
    let latencies: Vec<_> = outcomes.iter().map(|o| latency_breakdown(o.trace())).collect();
    let report = MetricReport {
        n,
        em: mean(outcomes.iter().map(|o| f64::from(u8::from(o.em))).sum()),
        f1: mean(outcomes.iter().map(|o| o.f1).sum()),
        failures: outcomes.iter().filter(|o| o.result.is_err()).count(),
        retrieval_recall: retrieval_recall(&retrieved, &gold).recall,
        inspection_precision: None,
        inspection_recall: None,
        latency_ms_by_phase: merge_latency(&latencies),
    };
    DatasetRun { outcomes, report }
}
