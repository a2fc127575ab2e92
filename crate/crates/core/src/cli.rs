//! Operator commands. Exit codes: 0 success, 1 runtime or I/O failure, 2 config or
//! schema error, 3 corpus or index error.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context as _};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use hoprag::config::Config;
use hoprag::eval::{
    inspection_precision_recall, latency_breakdown, load_dataset, merge_latency, parse_jsonl,
    retrieval_recall, LabeledAudit, MetricReport, QARecord,
};
use hoprag::gateway::{load_script, Gateway, ScriptedBackend};
use hoprag::memoize::{load_trace, EventType, TraceEvent, TrajectoryStore};
use hoprag::orchestrator::{run_dataset, Deps, ResultLine};
use hoprag::protocol::{AuditPhase, ErrorStage};
use hoprag::retrieval::{load_corpus, RetrievalEngine};
use hoprag::rewards::{
    inspector_reward, judge_plan, load_teacher_labels, mine_stage2_dataset, normalize_group, planner_reward,
    solver_reward, grpo_loss, RewardWeights, DEFAULT_EPSILON,
};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_CORPUS: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        Self {
            code: EXIT_RUNTIME,
            error: e.into(),
        }
    }
}

trait ExitContext<T> {
    fn exit_code(self, code: u8) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> ExitContext<T> for Result<T, E> {
    fn exit_code(self, code: u8) -> Result<T, CliError> {
        self.map_err(|e| CliError {
            code,
            error: e.into(),
        })
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "hoprag", version, about = "Multi-hop QA pipeline with audited retrieval and reasoning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline over a dataset and write results, metrics and traces.
    Run(RunArgs),
    /// Score a results file against a dataset.
    Eval(EvalArgs),
    /// Compute planner, solver and inspector rewards for a JSONL of samples.
    ScoreRewards(ScoreArgs),
    /// Build the inspector training set from successful traces and teacher labels.
    MineStage2(MineArgs),
    /// Summarize event counts, repairs, errors and latency over a trace directory.
    TraceReport(TraceDirArgs),
    /// Report evidence-cache hits per question over a trace directory.
    CacheStats(TraceDirArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `[corpus] path` in the config.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    /// Replay agent responses from a JSONL script instead of calling endpoints.
    #[arg(long, value_name = "SCRIPT")]
    pub scripted: Option<PathBuf>,
    /// Disable the evidence cache.
    #[arg(long)]
    pub no_memoize: bool,
    /// Skip pre-solve audits.
    #[arg(long)]
    pub no_context_inspector: bool,
    /// Skip post-solve audits.
    #[arg(long)]
    pub no_reasoning_inspector: bool,
    /// Treat each question as its single subquestion.
    #[arg(long)]
    pub no_planner: bool,
    /// Share one evidence cache across all questions of the run.
    #[arg(long)]
    pub global_cache: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Predicted audit labels (JSONL of {question_id, step, phase, stage}).
    #[arg(long, requires = "gold_audits")]
    pub pred_audits: Option<PathBuf>,
    /// Gold audit labels in the same format.
    #[arg(long, requires = "pred_audits")]
    pub gold_audits: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Reward weights are read from its `[rewards]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Supplies `n_gold` from `n_hops` for planner samples carrying a `question_id`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Judge script used for planner samples without `judge` scores.
    #[arg(long, value_name = "SCRIPT")]
    pub judge_script: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TraceDirArgs {
    #[arg(long)]
    pub traces: PathBuf,
    /// Write the report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

pub fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::ScoreRewards(a) => cmd_score(&a),
        Command::MineStage2(a) => cmd_mine(&a),
        Command::TraceReport(a) => cmd_trace_report(&a),
        Command::CacheStats(a) => cmd_cache_stats(&a),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .exit_code(EXIT_RUNTIME)?;
    parse_jsonl(BufReader::new(file), |_: &T| Ok(()))
        .with_context(|| format!("reading {}", path.display()))
        .exit_code(EXIT_CONFIG)
}

fn dataset(path: &Path) -> Result<Vec<QARecord>, CliError> {
    load_dataset(path)
        .with_context(|| format!("loading dataset {}", path.display()))
        .exit_code(EXIT_CONFIG)
}

fn cmd_run(a: &RunArgs) -> CliResult {
    let mut config = Config::load(&a.config).exit_code(EXIT_CONFIG)?;
    let p = &mut config.pipeline;
    p.memoize_on &= !a.no_memoize;
    p.context_inspector_on &= !a.no_context_inspector;
    p.reasoning_inspector_on &= !a.no_reasoning_inspector;
    p.planner_on &= !a.no_planner;
    p.global_cache |= a.global_cache;
    config.validate().exit_code(EXIT_CONFIG)?;
    if a.parallelism == 0 {
        return Err(anyhow!("--parallelism must be at least 1")).exit_code(EXIT_CONFIG);
    }
    let records = dataset(&a.dataset)?;

    let corpus_path = a
        .corpus
        .clone()
        .or_else(|| config.corpus_path())
        .ok_or_else(|| anyhow!("no corpus: set [corpus] path or pass --corpus"))
        .exit_code(EXIT_CONFIG)?;
    let corpus = load_corpus(&corpus_path)
        .with_context(|| format!("loading corpus {}", corpus_path.display()))
        .exit_code(EXIT_CORPUS)?;
    let embedder = config.build_embedder().exit_code(EXIT_CONFIG)?;
    let engine = RetrievalEngine::from_corpus(corpus, embedder, config.retrieval.clone())
        .context("building index")
        .exit_code(EXIT_CORPUS)?;

    let gateway = match &a.scripted {
        Some(path) => {
            let script = load_script(path)
                .with_context(|| format!("loading script {}", path.display()))
                .exit_code(EXIT_CONFIG)?;
            Gateway::uniform(Arc::new(ScriptedBackend::new(Arc::new(script))))
        }
        None => config.build_gateway().exit_code(EXIT_CONFIG)?,
    };

    let traces_dir = a.out.join("traces");
    std::fs::create_dir_all(&traces_dir).with_context(|| format!("creating {}", traces_dir.display()))?;
    let prompts = config.load_prompts().exit_code(EXIT_CONFIG)?;
    // a shared cache makes answers depend on question order, so run in input order
    let parallelism = if config.pipeline.global_cache { 1 } else { a.parallelism };
    if parallelism != a.parallelism {
        eprintln!("note: --global-cache runs questions sequentially");
    }
    let deps = Deps::new(Arc::new(gateway), Arc::new(engine), config.pipeline.clone())
        .with_prompts(prompts)
        .with_traces(TrajectoryStore::in_dir(&traces_dir));

    let run = run_dataset(&records, &deps, parallelism);
    write_jsonl(&a.out.join("results.jsonl"), run.outcomes.iter().map(ResultLine::from))?;
    std::fs::write(a.out.join("metrics.json"), serde_json::to_string_pretty(&run.report)?)?;
    for o in &run.outcomes {
        if let Err(f) = &o.result {
            eprintln!("question {} failed: {}", o.question_id, f.error);
        }
    }
    println!(
        "{} questions, {} failed, EM {:.1}, F1 {:.1}",
        run.report.n,
        run.report.failures,
        100.0 * run.report.em,
        100.0 * run.report.f1
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult {
    let results: Vec<ResultLine> = read_jsonl(&a.results)?;
    if results.is_empty() {
        return Err(anyhow!("{} has no results", a.results.display())).exit_code(EXIT_CONFIG);
    }
    let records = dataset(&a.dataset)?;
    let by_id: HashMap<&str, &QARecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut pairs = Vec::new();
    let mut retrieved = Vec::new();
    let mut gold_support = Vec::new();
    for r in &results {
        let rec = by_id
            .get(r.question_id.as_str())
            .ok_or_else(|| anyhow!("result {} has no dataset record", r.question_id))
            .exit_code(EXIT_CONFIG)?;
        pairs.push((r.final_answer.clone(), rec.golds()));
        retrieved.push(r.step_stats.iter().flat_map(|s| s.retrieved_ids.clone()).collect::<Vec<_>>());
        gold_support.push(rec.gold_support_ids.clone());
    }
    let mut report = MetricReport::from_answers(&pairs);
    let recall = retrieval_recall(&retrieved, &gold_support);
    report.retrieval_recall = recall.recall;
    println!("n {}", report.n);
    println!("EM {:.1}", 100.0 * report.em);
    println!("F1 {:.1}", 100.0 * report.f1);
    if let Some(r) = recall.recall {
        println!("retrieval_recall {:.3} ({} scored, {} excluded)", r, recall.scored, recall.excluded);
    }
    if let (Some(p), Some(g)) = (&a.pred_audits, &a.gold_audits) {
        let pred: Vec<LabeledAudit> = read_jsonl(p)?;
        let gold: Vec<LabeledAudit> = read_jsonl(g)?;
        let s = inspection_precision_recall(&pred, &gold).exit_code(EXIT_CONFIG)?;
        println!(
            "inspection_precision {:.3}{}",
            s.precision,
            if s.no_detections { " (no detections)" } else { "" }
        );
        println!("inspection_recall {:.3}", s.recall);
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
enum SampleKind {
    Planner {
        text: String,
        #[serde(default)]
        question: Option<String>,
        #[serde(default)]
        question_id: Option<String>,
        #[serde(default)]
        n_gold: Option<usize>,
        #[serde(default)]
        judge: Option<[u8; 4]>,
    },
    Solver {
        text: String,
        gold_answer: String,
        #[serde(default)]
        gold_aliases: Vec<String>,
        #[serde(default)]
        gold_source_ids: Vec<String>,
    },
    Inspector {
        text: String,
        phase: AuditPhase,
        e_star: ErrorStage,
    },
}

#[derive(Debug, Deserialize)]
struct Sample {
    id: String,
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    logprob: Option<f64>,
    #[serde(flatten)]
    kind: SampleKind,
}

fn cmd_score(a: &ScoreArgs) -> CliResult {
    let weights = match &a.config {
        Some(p) => Config::load(p).exit_code(EXIT_CONFIG)?.rewards,
        None => RewardWeights::default(),
    };
    let n_hops: HashMap<String, usize> = match &a.dataset {
        Some(p) => dataset(p)?
            .into_iter()
            .filter_map(|r| r.n_hops.map(|n| (r.id, n)))
            .collect(),
        None => HashMap::new(),
    };
    let judge_gateway = match &a.judge_script {
        Some(p) => {
            let script = load_script(p).exit_code(EXIT_CONFIG)?;
            Some(Gateway::uniform(Arc::new(ScriptedBackend::new(Arc::new(script)))))
        }
        None => None,
    };
    let samples: Vec<Sample> = read_jsonl(&a.input)?;

    let mut rows = Vec::with_capacity(samples.len());
    for s in &samples {
        let (role, breakdown, total) = match &s.kind {
            SampleKind::Planner {
                text,
                question,
                question_id,
                n_gold,
                judge,
            } => {
                let n_gold = n_gold
                    .or_else(|| question_id.as_ref().and_then(|q| n_hops.get(q).copied()))
                    .ok_or_else(|| anyhow!("sample {}: no n_gold and no n_hops for it", s.id))
                    .exit_code(EXIT_CONFIG)?;
                let judge = match (judge, &judge_gateway) {
                    (Some(j), _) => *j,
                    (None, Some(g)) => {
                        let q = question
                            .as_deref()
                            .ok_or_else(|| anyhow!("sample {}: judging needs `question`", s.id))
                            .exit_code(EXIT_CONFIG)?;
                        judge_plan(g, question_id.as_deref().unwrap_or(&s.id), q, text)?
                    }
                    (None, None) => {
                        return Err(anyhow!("sample {}: no judge scores and no --judge-script", s.id))
                            .exit_code(EXIT_CONFIG)
                    }
                };
                let b = planner_reward(text, n_gold, judge, &weights.planner);
                ("planner", serde_json::to_value(&b)?, b.total)
            }
            SampleKind::Solver {
                text,
                gold_answer,
                gold_aliases,
                gold_source_ids,
            } => {
                let b = solver_reward(text, gold_answer, gold_aliases, gold_source_ids, &weights.solver);
                ("solver", serde_json::to_value(&b)?, b.total)
            }
            SampleKind::Inspector { text, phase, e_star } => {
                if !ErrorStage::admissible(*phase).contains(e_star) {
                    return Err(anyhow!("sample {}: e_star {} not valid for phase {phase}", s.id, e_star.as_str()))
                        .exit_code(EXIT_CONFIG);
                }
                let b = inspector_reward(text, *phase, *e_star, &weights.inspector);
                ("inspector", serde_json::to_value(&b)?, b.total)
            }
        };
        rows.push(json!({"id": s.id, "role": role, "total": total, "breakdown": breakdown}));
    }

    // group-relative advantages for samples sharing a group id
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if let Some(g) = &s.group {
            groups.entry(g.as_str()).or_default().push(i);
        }
    }
    let mut losses = BTreeMap::new();
    for (g, idx) in &groups {
        let rewards: Vec<f64> = idx.iter().map(|&i| rows[i]["total"].as_f64().unwrap_or(0.0)).collect();
        let adv = normalize_group(&rewards, DEFAULT_EPSILON)
            .with_context(|| format!("group {g}"))
            .exit_code(EXIT_CONFIG)?;
        for (&i, a) in idx.iter().zip(&adv) {
            rows[i]["group"] = json!(g);
            rows[i]["advantage"] = json!(a);
        }
        let logprobs: Option<Vec<f64>> = idx.iter().map(|&i| samples[i].logprob).collect();
        if let Some(lp) = logprobs {
            losses.insert(*g, grpo_loss(&adv, &lp)?);
        }
    }
    write_jsonl(&a.out, &rows)?;
    println!("scored {} samples", rows.len());
    for (g, l) in losses {
        println!("group {g} loss {l:.6}");
    }
    Ok(())
}

fn trace_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_traces(dir: &Path) -> Result<Vec<Vec<TraceEvent>>, CliError> {
    let mut out = Vec::new();
    for f in trace_files(dir)? {
        let t = load_trace(&f)
            .with_context(|| format!("reading trace {}", f.display()))
            .exit_code(EXIT_CONFIG)?;
        if !t.is_empty() {
            out.push(t);
        }
    }
    Ok(out)
}

fn cmd_mine(a: &MineArgs) -> CliResult {
    let traces = load_traces(&a.traces)?;
    let golds: HashMap<String, Vec<String>> = dataset(&a.gold)?.into_iter().map(|r| (r.id.clone(), r.golds())).collect();
    let labels = load_teacher_labels(&a.labels)
        .with_context(|| format!("reading labels {}", a.labels.display()))
        .exit_code(EXIT_CONFIG)?;
    let records = mine_stage2_dataset(&traces, &golds, &labels).exit_code(EXIT_CONFIG)?;
    let retained: std::collections::BTreeSet<&str> = records.iter().map(|r| r.question_id.as_str()).collect();
    write_jsonl(&a.out, &records)?;
    println!(
        "retained {} of {} traces, {} records",
        retained.len(),
        traces.len(),
        records.len()
    );
    Ok(())
}

fn payload_str<'a>(e: &'a TraceEvent, key: &str) -> Option<&'a str> {
    e.payload.get(key).and_then(Value::as_str)
}

fn cmd_trace_report(a: &TraceDirArgs) -> CliResult {
    let traces = load_traces(&a.traces)?;
    let mut events: BTreeMap<EventType, usize> = BTreeMap::new();
    let mut retries: BTreeMap<String, usize> = BTreeMap::new();
    let mut errors: BTreeMap<String, usize> = BTreeMap::new();
    let mut latencies = Vec::new();
    for t in &traces {
        for e in t {
            *events.entry(e.event_type).or_default() += 1;
            let kind = payload_str(e, "kind").unwrap_or("unknown").to_string();
            match e.event_type {
                EventType::Retry => *retries.entry(kind).or_default() += 1,
                EventType::Error => *errors.entry(kind).or_default() += 1,
                _ => {}
            }
        }
        latencies.push(latency_breakdown(t));
    }
    let latency = merge_latency(&latencies);
    if a.json {
        let report = json!({
            "questions": traces.len(),
            "events": events.iter().map(|(k, v)| (k.as_str(), v)).collect::<BTreeMap<_, _>>(),
            "retries": retries,
            "errors": errors,
            "latency_ms_by_phase": latency,
        });
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    println!("questions {}", traces.len());
    for (k, v) in &events {
        println!("event {:<16} {v}", k.as_str());
    }
    for (k, v) in &retries {
        println!("retry {k:<20} {v}");
    }
    for (k, v) in &errors {
        println!("error {k:<20} {v}");
    }
    for (k, l) in &latency {
        println!("latency {:<16} total {} ms, mean {:.1} ms, n {}", k.as_str(), l.total_ms, l.mean_ms, l.count);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CacheRow {
    question_id: String,
    steps: usize,
    hits: usize,
}

fn cmd_cache_stats(a: &TraceDirArgs) -> CliResult {
    let traces = load_traces(&a.traces)?;
    let rows: Vec<CacheRow> = traces
        .iter()
        .map(|t| {
            let mut steps: Vec<u64> = t
                .iter()
                .filter(|e| e.event_type != EventType::Plan)
                .filter_map(|e| e.payload.get("step").and_then(Value::as_u64))
                .collect();
            steps.sort_unstable();
            steps.dedup();
            CacheRow {
                question_id: t[0].question_id.clone(),
                steps: steps.len(),
                hits: t.iter().filter(|e| e.event_type == EventType::CacheHit).count(),
            }
        })
        .collect();
    let steps: usize = rows.iter().map(|r| r.steps).sum();
    let hits: usize = rows.iter().map(|r| r.hits).sum();
    let rate = if steps == 0 { 0.0 } else { hits as f64 / steps as f64 };
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({"steps": steps, "hits": hits, "hit_rate": rate, "questions": rows}))?
        );
        return Ok(());
    }
    for r in &rows {
        println!("{:<24} steps {:>3} hits {:>3}", r.question_id, r.steps, r.hits);
    }
    println!("total steps {steps}, hits {hits}, hit rate {:.3}", rate);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_toggle() {
        let help = Cli::command()
            .find_subcommand_mut("run")
            .unwrap()
            .render_long_help()
            .to_string();
        for flag in [
            "--parallelism",
            "--scripted",
            "--no-memoize",
            "--no-context-inspector",
            "--no-reasoning-inspector",
            "--no-planner",
            "--global-cache",
        ] {
            assert!(help.contains(flag), "{flag} missing from help");
        }
    }

    #[test]
    fn samples_parse_by_role() {
        let s: Sample = serde_json::from_str(
            r#"{"id":"a","role":"inspector","text":"t","phase":"reasoning","e_star":"extraction","group":"g"}"#,
        )
        .unwrap();
        assert!(matches!(s.kind, SampleKind::Inspector { e_star: ErrorStage::Extraction, .. }));
        assert!(serde_json::from_str::<Sample>(r#"{"id":"a","role":"wizard","text":"t"}"#).is_err());
    }
}
