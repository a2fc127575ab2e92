use std::collections::{HashMap, HashSet};

use super::Passage;
use crate::text::informative_tokens;

/// Lexical relevance in [0, 1].
pub trait SparseScorer: Send + Sync {
    fn score(&self, query: &str, passage: &Passage) -> f64;
}

/// IDF-weighted token overlap normalized by the query's own weight mass, so a passage
/// containing every informative query token scores exactly 1.0.
#[derive(Debug, Clone, Default)]
pub struct TfIdfSparse {
    doc_freq: HashMap<String, usize>,
    n_docs: usize,
}

fn token_set(text: &str) -> HashSet<String> {
    informative_tokens(text).into_iter().collect()
}

pub(crate) fn passage_tokens(p: &Passage) -> HashSet<String> {
    let mut t = token_set(&p.title);
    t.extend(token_set(&p.body));
    t
}

impl TfIdfSparse {
    pub fn fit(corpus: &[Passage]) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for p in corpus {
            for t in passage_tokens(p) {
                *doc_freq.entry(t).or_default() += 1;
            }
        }
        Self {
            doc_freq,
            n_docs: corpus.len(),
        }
    }

    pub fn idf(&self, token: &str) -> f64 {
        let df = self.doc_freq.get(token).copied().unwrap_or(0) as f64;
        (1.0 + (self.n_docs as f64 + 1.0) / (df + 1.0)).ln()
    }

    /// Unnormalized overlap mass.
    pub fn raw_score(&self, query: &str, passage: &Passage) -> f64 {
        let ptoks = passage_tokens(passage);
        token_set(query)
            .iter()
            .filter(|t| ptoks.contains(*t))
            .map(|t| self.idf(t))
            .sum()
    }
}

impl SparseScorer for TfIdfSparse {
    fn score(&self, query: &str, passage: &Passage) -> f64 {
        let q = token_set(query);
        let max: f64 = q.iter().map(|t| self.idf(t)).sum();
        if max <= 0.0 {
            return 0.0;
        }
        (self.raw_score(query, passage) / max).clamp(0.0, 1.0)
    }
}
