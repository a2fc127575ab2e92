mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;
use serde_json::Value;

fn hoprag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoprag")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn run_replay(out: &Path, extra: &[&str]) -> Output {
    let (config, dataset, script) = (fixture("config.toml"), fixture("replay_dataset.jsonl"), fixture("replay_script.jsonl"));
    let mut args = vec!["run", "--config", p(&config), "--dataset", p(&dataset), "--out", p(out), "--scripted", p(&script)];
    args.extend_from_slice(extra);
    hoprag(&args)
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn events_of(out: &Path, ty: &str) -> usize {
    ["t7", "t8"]
        .iter()
        .flat_map(|q| lines(&out.join(format!("traces/{q}.jsonl"))))
        .filter(|e| e["event_type"] == ty)
        .count()
}

#[test]
fn run_writes_results_metrics_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_replay(dir.path(), &["--parallelism", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = lines(&dir.path().join("results.jsonl"));
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["final_answer"], "1969");
    assert_eq!(results[1]["final_answer"], "Diane Keaton");
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["n"], 2);
    assert_eq!(metrics["em"], 0.5);
    assert!(dir.path().join("traces/t7.jsonl").exists());
    assert!(dir.path().join("traces/t8.jsonl").exists());

    // eval on the run output
    let (res, ds) = (dir.path().join("results.jsonl"), fixture("replay_dataset.jsonl"));
    let e = hoprag(&["eval", "--results", p(&res), "--dataset", p(&ds)]);
    assert!(e.status.success());
    let text = stdout(&e);
    assert!(text.contains("EM 50.0"), "{text}");
    assert!(text.contains("retrieval_recall"), "{text}");

    // mining keeps only the successful question
    let (labels, mined) = (fixture("teacher_labels.jsonl"), dir.path().join("stage2.jsonl"));
    let traces = dir.path().join("traces");
    let m = hoprag(&["mine-stage2", "--traces", p(&traces), "--gold", p(&ds), "--labels", p(&labels), "--out", p(&mined)]);
    assert!(m.status.success(), "{}", String::from_utf8_lossy(&m.stderr));
    assert!(stdout(&m).contains("retained 1 of 2 traces, 6 records"), "{}", stdout(&m));
    assert_eq!(lines(&mined).len(), 6);

    let r = hoprag(&["trace-report", "--traces", p(&traces), "--json"]);
    assert!(r.status.success());
    let report: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(report["questions"], 2);
    assert_eq!(report["retries"]["ctx_expansion"], 1);
    assert_eq!(report["retries"]["solver_retry"], 1);

    let c = hoprag(&["cache-stats", "--traces", p(&traces)]);
    assert!(c.status.success());
    assert!(stdout(&c).contains("hit rate"));
}

#[test]
fn ablation_flags_change_behavior() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_replay(dir.path(), &["--no-memoize"]);
    assert!(o.status.success());
    assert_eq!(events_of(dir.path(), "cache_hit"), 0);

    let dir = tempfile::tempdir().unwrap();
    let o = run_replay(dir.path(), &["--no-planner", "--no-context-inspector", "--no-reasoning-inspector"]);
    assert!(o.status.success());
    for r in lines(&dir.path().join("results.jsonl")) {
        assert_eq!(r["step_stats"].as_array().map_or(0, Vec::len), 1, "{r}");
    }
    assert_eq!(events_of(dir.path(), "inspect_context"), 0);
    assert_eq!(events_of(dir.path(), "inspect_reason"), 0);
    let plan = &lines(&dir.path().join("traces/t7.jsonl"))[0];
    assert_eq!(plan["payload"]["planner"], false);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[pipeline]\ntau = 7.0\n").unwrap();
    let ds = fixture("replay_dataset.jsonl");
    let out = dir.path().join("out");
    let o = hoprag(&["run", "--config", p(&bad), "--dataset", p(&ds), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let missing = dir.path().join("nocorpus.toml");
    std::fs::write(&missing, "[corpus]\npath = \"does_not_exist.jsonl\"\n").unwrap();
    let o = hoprag(&["run", "--config", p(&missing), "--dataset", p(&ds), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3));

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = hoprag(&["eval", "--results", p(&empty), "--dataset", p(&ds)]);
    assert_eq!(o.status.code(), Some(2));

    let garbage = dir.path().join("garbage.jsonl");
    std::fs::write(&garbage, "{\"question_id\": 1}\n").unwrap();
    let o = hoprag(&["eval", "--results", p(&garbage), "--dataset", p(&ds)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_all_correct() {
    let dir = tempfile::tempdir().unwrap();
    let res = dir.path().join("r.jsonl");
    std::fs::write(
        &res,
        "{\"question_id\":\"t7\",\"final_answer\":\"1969\",\"em\":1.0,\"f1\":1.0,\"step_stats\":[]}\n\
         {\"question_id\":\"t8\",\"final_answer\":\"Eleanor Coppola\",\"em\":1.0,\"f1\":1.0,\"step_stats\":[]}\n",
    )
    .unwrap();
    let ds = fixture("replay_dataset.jsonl");
    let (pa, ga) = (fixture("audits_pred.jsonl"), fixture("audits_gold.jsonl"));
    let o = hoprag(&["eval", "--results", p(&res), "--dataset", p(&ds), "--pred-audits", p(&pa), "--gold-audits", p(&ga)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("EM 100.0"), "{text}");
    assert!(text.contains("inspection_precision 0.500"), "{text}");
}

#[test]
fn mining_without_successes_writes_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_replay(dir.path(), &[]);
    assert!(o.status.success());
    let wrong = dir.path().join("wrong_gold.jsonl");
    std::fs::write(
        &wrong,
        "{\"id\":\"t7\",\"question\":\"q\",\"answer\":\"2001\"}\n{\"id\":\"t8\",\"question\":\"q\",\"answer\":\"nobody\"}\n",
    )
    .unwrap();
    let (traces, out) = (dir.path().join("traces"), dir.path().join("s2.jsonl"));
    let m = hoprag(&["mine-stage2", "--traces", p(&traces), "--gold", p(&wrong), "--labels", p(&wrong), "--out", p(&out)]);
    // the label file is malformed, which is a schema error even with nothing to mine
    assert_eq!(m.status.code(), Some(2));
    let labels = fixture("teacher_labels.jsonl");
    let m = hoprag(&["mine-stage2", "--traces", p(&traces), "--gold", p(&wrong), "--labels", p(&labels), "--out", p(&out)]);
    assert!(m.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");

    let none = dir.path().join("none.jsonl");
    std::fs::write(&none, "").unwrap();
    let ds = fixture("replay_dataset.jsonl");
    let m = hoprag(&["mine-stage2", "--traces", p(&traces), "--gold", p(&ds), "--labels", p(&none), "--out", p(&out)]);
    assert_eq!(m.status.code(), Some(2), "missing labels for t7");
}

#[test]
fn score_rewards_with_groups() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("samples.jsonl");
    let plan = common::plan(&["a", "b", "c"]).replace('\n', "\\n");
    std::fs::write(
        &input,
        format!(
            "{{\"id\":\"p1\",\"role\":\"planner\",\"text\":\"{plan}\",\"n_gold\":3,\"judge\":[1,1,1,1],\"group\":\"g\",\"logprob\":-1.0}}\n\
             {{\"id\":\"p2\",\"role\":\"planner\",\"text\":\"bad\",\"n_gold\":3,\"judge\":[0,0,0,0],\"group\":\"g\",\"logprob\":-2.0}}\n\
             {{\"id\":\"s1\",\"role\":\"solver\",\"text\":\"<reasoning>x</reasoning><sources>[Doc_1]</sources><answer>1969</answer>\",\"gold_answer\":\"1969\",\"gold_source_ids\":[\"Doc_1\",\"Doc_3\"]}}\n\
             {{\"id\":\"i1\",\"role\":\"inspector\",\"text\":\"<error_stage>none</error_stage><explanation>OK</explanation>\",\"phase\":\"context\",\"e_star\":\"none\"}}\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("scores.jsonl");
    let o = hoprag(&["score-rewards", "--input", p(&input), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = lines(&out);
    assert_eq!(rows[0]["total"], 5.0);
    assert_eq!(rows[1]["total"], 0.0);
    assert!(rows[0]["advantage"].as_f64().unwrap() > 0.99);
    assert_eq!(rows[2]["total"], 2.5);
    assert_eq!(rows[3]["total"], 3.0);
    assert!(stdout(&o).contains("group g loss"));
}

#[test]
fn help_lists_every_subcommand() {
    let o = hoprag(&["--help"]);
    let text = stdout(&o);
    for sub in ["run", "eval", "score-rewards", "mine-stage2", "trace-report", "cache-stats"] {
        assert!(text.contains(sub), "{sub}");
    }
}
