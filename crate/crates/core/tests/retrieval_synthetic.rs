mod common;

use std::sync::Arc;

use common::synthetic::planted_corpus;
use hoprag::retrieval::{dense_score, CascadeConfig, Embedder, HashingEmbedder, RetrievalEngine};

fn engine(passages: Vec<hoprag::retrieval::Passage>) -> RetrievalEngine {
    RetrievalEngine::from_corpus(passages, Arc::new(HashingEmbedder::default()), CascadeConfig::default()).unwrap()
}

fn recall_at_10(hits: impl Iterator<Item = bool>) -> f64 {
    let v: Vec<bool> = hits.collect();
    v.iter().filter(|h| **h).count() as f64 / v.len() as f64
}

#[test]
fn cascade_recall_not_below_dense_only() {
    let pc = planted_corpus(7, 200, 100);
    let e = engine(pc.passages);
    let dense = recall_at_10(pc.queries.iter().map(|(q, gold)| {
        e.dense_search(q, 10).unwrap().iter().any(|p| &p.passage_id == gold)
    }));
    let cascade = recall_at_10(pc.queries.iter().map(|(q, gold)| {
        e.retrieve(q).unwrap().passages.iter().any(|p| &p.passage_id == gold)
    }));
    assert!(cascade >= dense, "cascade {cascade} < dense {dense}");
}

#[test]
fn hybrid_scores_fuse_pointwise() {
    let pc = planted_corpus(11, 200, 100);
    let e = engine(pc.passages);
    let alpha = e.config().alpha;
    assert_eq!(alpha, 0.65);
    for (q, _) in &pc.queries {
        for p in e.retrieve(q).unwrap().passages {
            let (d, s, h) = (p.dense_score, p.sparse_score.unwrap(), p.hybrid_score.unwrap());
            assert!((h - (0.65 * d + 0.35 * s)).abs() <= 1e-12);
        }
    }
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[test]
fn dense_search_matches_brute_force() {
    let pc = planted_corpus(3, 200, 100);
    let embedder = HashingEmbedder::default();
    let docs: Vec<(String, Vec<f64>)> = pc
        .passages
        .iter()
        .map(|p| (p.id.clone(), embedder.embed(&p.body).unwrap().components().to_vec()))
        .collect();
    let e = engine(pc.passages);
    for (q, _) in &pc.queries {
        let qv = embedder.embed(q).unwrap();
        let mut oracle: Vec<(f64, &str)> = docs
            .iter()
            .map(|(id, v)| (dense_score(oracle_cosine(qv.components(), v)), id.as_str()))
            .collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        let got = e.dense_search(q, 200).unwrap();
        assert_eq!(got.len(), 200);
        for (rank, (g, o)) in got.iter().zip(&oracle).enumerate() {
            // identical ranking up to floating-point ties
            assert!((g.dense_score - o.0).abs() <= 1e-12, "rank {rank}: {} vs {}", g.dense_score, o.0);
            if g.passage_id != o.1 {
                let tied = docs.iter().find(|(id, _)| *id == g.passage_id).unwrap();
                let s = dense_score(oracle_cosine(qv.components(), &tied.1));
                assert!((s - o.0).abs() <= 1e-12, "rank {rank}: {} vs {}", g.passage_id, o.1);
            }
        }
    }
}
