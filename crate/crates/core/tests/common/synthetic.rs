//! Seeded generators for synthetic corpora and randomized agent scripts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use hoprag::eval::QARecord;
use hoprag::retrieval::Passage;

pub struct PlantedCorpus {
    pub passages: Vec<Passage>,
    /// (query, gold passage id)
    pub queries: Vec<(String, String)>,
}

/// `n_docs` passages over a shared vocabulary. Each query pairs two rare key terms,
/// planted together only in its gold passage, with three common filler terms that
/// appear throughout the corpus.
pub fn planted_corpus(seed: u64, n_docs: usize, n_queries: usize) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let common: Vec<String> = (0..40).map(|i| format!("common{i}")).collect();
    let rare: Vec<String> = (0..2 * n_docs).map(|i| format!("rare{i}")).collect();
    let mut bodies: Vec<Vec<String>> = (0..n_docs)
        .map(|_| {
            let mut words: Vec<String> = (0..12).map(|_| common.choose(&mut rng).unwrap().clone()).collect();
            words.extend((0..6).map(|_| rare.choose(&mut rng).unwrap().clone()));
            words
        })
        .collect();
    let mut queries = Vec::new();
    for q in 0..n_queries {
        let gold = q % n_docs;
        let keys = [rare[2 * q % rare.len()].clone(), rare[(2 * q + 1) % rare.len()].clone()];
        bodies[gold].extend(keys.iter().cloned());
        // a decoy carries one key term plus the filler
        let decoy = (gold + 1 + rng.gen_range(0..n_docs - 1)) % n_docs;
        bodies[decoy].push(keys[0].clone());
        let filler: Vec<String> = (0..3).map(|_| common.choose(&mut rng).unwrap().clone()).collect();
        bodies[decoy].extend(filler.iter().cloned());
        let mut terms: Vec<String> = keys.to_vec();
        terms.extend(filler);
        terms.shuffle(&mut rng);
        queries.push((terms.join(" "), format!("doc{gold:03}")));
    }
    let passages = bodies
        .into_iter()
        .enumerate()
        .map(|(i, mut words)| {
            words.shuffle(&mut rng);
            Passage {
                id: format!("doc{i:03}"),
                title: format!("Document {i}"),
                body: words.join(" "),
            }
        })
        .collect();
    PlantedCorpus { passages, queries }
}

fn audit(stage: &str, explanation: &str) -> String {
    super::audit(stage, explanation)
}

/// Random but well-typed scripts for `n` questions over the fixture corpus. Every
/// question gets up to 12 scripted calls per role; unscoped fallbacks keep later
/// calls answerable so runs never stall on an exhausted script.
pub fn random_scenarios(seed: u64, n: usize) -> (Vec<QARecord>, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = ["Parasite", "Bong Joon-ho", "Al Pacino", "The Godfather Part III", "Diane Keaton", "Korean cinema"];
    let ctx = [
        audit("none", "OK"),
        audit("retrieval", "None of the documents mention the key entity."),
        audit("subquestion", "The subquestion names the wrong entity."),
        "garbage without tags".to_string(),
    ];
    let rea = [
        audit("none", "OK"),
        audit("reasoning", "The documents do not mention this fact."),
        audit("reasoning", "Answer is bound to a different entity in [Doc_2]."),
        audit("extraction", "Output only the minimal answer."),
        "<error_stage>bogus</error_stage><explanation>x</explanation>".to_string(),
    ];
    let answers = ["Bong Joon-ho", "1969", "Not found in the documents", "Al Pacino; spouse not mentioned", "Seoul"];
    let mut lines = Vec::new();
    let mut push = |role: &str, ordinal: Option<usize>, q: Option<&str>, response: String| {
        let mut e = json!({"role": role, "response": response});
        if let Some(o) = ordinal {
            e["ordinal"] = json!(o);
        }
        if let Some(q) = q {
            e["question"] = json!(q);
        }
        lines.push(e.to_string());
    };
    let mut records = Vec::new();
    for i in 0..n {
        let qid = format!("r{i:03}");
        let hops = rng.gen_range(1..=4);
        let subs: Vec<String> = (0..hops)
            .map(|h| {
                let s = subjects.choose(&mut rng).unwrap();
                if h > 0 && rng.gen_bool(0.6) {
                    format!("What is known about [ANSWER_{}] and {s}?", h - 1)
                } else {
                    format!("Who is associated with {s}?")
                }
            })
            .collect();
        let plan = if rng.gen_bool(0.1) {
            "no plan here".to_string()
        } else {
            let refs: Vec<&str> = subs.iter().map(String::as_str).collect();
            super::plan(&refs)
        };
        push("planner", Some(1), Some(&qid), plan);
        for o in 1..=12 {
            push("context_inspector", Some(o), Some(&qid), ctx.choose(&mut rng).unwrap().clone());
            push("reasoning_inspector", Some(o), Some(&qid), rea.choose(&mut rng).unwrap().clone());
            push("solver", Some(o), Some(&qid), super::solver(answers.choose(&mut rng).unwrap()));
            push(
                "query_rewriter",
                Some(o),
                Some(&qid),
                format!("<query>{} biography</query>", subjects.choose(&mut rng).unwrap()),
            );
            push(
                "subq_rewriter",
                Some(o),
                Some(&qid),
                format!("<subquestion>Who directed {}?</subquestion>", subjects.choose(&mut rng).unwrap()),
            );
        }
        records.push(QARecord {
            id: qid,
            question: format!("Synthetic question {i}?"),
            answer: answers[0].to_string(),
            answer_aliases: Vec::new(),
            kind: Some("bridge".into()),
            gold_support_ids: None,
            n_hops: Some(hops),
        });
    }
    push("context_inspector", None, None, audit("none", "OK"));
    push("reasoning_inspector", None, None, audit("none", "OK"));
    push("solver", None, None, super::solver("Seoul"));
    push("query_rewriter", None, None, "<query>film director</query>".to_string());
    push("subq_rewriter", None, None, "<subquestion>Who directed Parasite?</subquestion>".to_string());
    push("planner", None, None, super::plan(&["Who directed Parasite?"]));
    (records, lines.join("\n"))
}
