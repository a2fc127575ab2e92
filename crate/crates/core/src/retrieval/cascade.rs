use super::index::{rank_order, Index};
use super::sparse::SparseScorer;
use super::{Passage, RetrievalError, ScoredPassage};

/// Full query-passage interaction scorer for the last cascade stage.
pub trait CrossScorer: Send + Sync {
    fn score(&self, query: &str, passage: &Passage) -> Result<f64, String>;
}

fn rerank(items: &mut [ScoredPassage]) {
    for (i, p) in items.iter_mut().enumerate() {
        p.rank = i + 1;
    }
}

/// Fused score `alpha * dense + (1 - alpha) * sparse`.
pub fn hybrid_score(alpha: f64, dense: f64, sparse: f64) -> f64 {
    alpha * dense + (1.0 - alpha) * sparse
}

/// Stage 2: attach sparse and fused scores, keep the best `k2`.
pub fn hybrid_rerank(
    index: &Index,
    sparse: &dyn SparseScorer,
    query: &str,
    candidates: Vec<ScoredPassage>,
    alpha: f64,
    k2: usize,
) -> Vec<ScoredPassage> {
    let mut out: Vec<ScoredPassage> = candidates
        .into_iter()
        .map(|mut c| {
            let s = index
                .passage(&c.passage_id)
                .map_or(0.0, |p| sparse.score(query, p));
            c.sparse_score = Some(s);
            c.hybrid_score = Some(hybrid_score(alpha, c.dense_score, s));
            c
        })
        .collect();
    out.sort_by(|a, b| {
        rank_order(
            a.hybrid_score.unwrap_or(0.0),
            &a.passage_id,
            b.hybrid_score.unwrap_or(0.0),
            &b.passage_id,
        )
    });
    out.truncate(k2);
    rerank(&mut out);
    out
}

/// Stage 3: rescore with `scorer` and keep the best `k3`. Without a scorer the
/// incoming order passes through, truncated.
pub fn cross_rerank(
    index: &Index,
    scorer: Option<&dyn CrossScorer>,
    query: &str,
    candidates: Vec<ScoredPassage>,
    k3: usize,
) -> Result<Vec<ScoredPassage>, RetrievalError> {
    let mut out = candidates;
    if let Some(scorer) = scorer {
        for c in out.iter_mut() {
            let passage = index
                .passage(&c.passage_id)
                .ok_or_else(|| RetrievalError::UnknownPassage(c.passage_id.clone()))?;
            let s = scorer
                .score(query, passage)
                .map_err(|message| RetrievalError::ScorerFailure {
                    passage_id: c.passage_id.clone(),
                    message,
                })?;
            c.rerank_score = Some(s);
        }
        out.sort_by(|a, b| {
            rank_order(
                a.rerank_score.unwrap_or(0.0),
                &a.passage_id,
                b.rerank_score.unwrap_or(0.0),
                &b.passage_id,
            )
        });
    }
    out.truncate(k3);
    rerank(&mut out);
    Ok(out)
}
