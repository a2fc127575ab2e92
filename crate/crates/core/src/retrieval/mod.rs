//! Three-stage retrieval cascade: dense search, hybrid dense/sparse fusion and an
//! optional cross-scorer, plus the cumulative pool used for inspector-driven expansion.

mod cascade;
mod embed;
mod index;
mod pool;
mod sparse;

use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cascade::{cross_rerank, hybrid_rerank, hybrid_score, CrossScorer};
pub use embed::{EmbedError, Embedder, EmbeddingVector, HashingEmbedder, HttpEmbedder, HttpEmbedderConfig};
pub use index::{build_index, dense_score, Index, IvfParams};
pub use pool::{DocumentPool, MergeStrategy, PoolEntry};
pub use sparse::{SparseScorer, TfIdfSparse};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub title: String,
    #[serde(rename = "text")]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage_id: String,
    pub dense_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_score: Option<f64>,
    pub rank: usize,
}

impl ScoredPassage {
    pub fn dense(id: &str, dense_score: f64, rank: usize) -> Self {
        Self {
            passage_id: id.to_string(),
            dense_score,
            sparse_score: None,
            hybrid_score: None,
            rerank_score: None,
            rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    pub alpha: f64,
    pub ivf_nlist: usize,
    pub ivf_nprobe: usize,
    /// Corpora smaller than this use exact search regardless of the IVF parameters.
    pub ivf_min_corpus: usize,
    pub max_expansion_iters: usize,
    pub max_pool_docs: usize,
    pub merge_strategy: MergeStrategy,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            k1: 100,
            k2: 30,
            k3: 10,
            alpha: 0.65,
            ivf_nlist: 4096,
            ivf_nprobe: 128,
            ivf_min_corpus: 100_000,
            max_expansion_iters: 3,
            max_pool_docs: 25,
            merge_strategy: MergeStrategy::RecentFirst,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let fail = |m: String| Err(RetrievalError::InvalidConfig(m));
        if self.k3 == 0 || self.k3 > self.k2 || self.k2 > self.k1 {
            return fail(format!(
                "need 1 <= k3 <= k2 <= k1, got k1={} k2={} k3={}",
                self.k1, self.k2, self.k3
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if self.max_pool_docs < self.k3 {
            return fail(format!(
                "max_pool_docs {} < k3 {}",
                self.max_pool_docs, self.k3
            ));
        }
        Ok(())
    }

    pub fn ivf(&self) -> IvfParams {
        IvfParams {
            nlist: self.ivf_nlist,
            nprobe: self.ivf_nprobe,
            min_corpus: self.ivf_min_corpus,
        }
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate passage id {0:?}")]
    DuplicateId(String),
    #[error("embedder failed on passage {passage_id:?}: {message}")]
    EmbedderFailure { passage_id: String, message: String },
    #[error("embedder failed on query: {0}")]
    QueryEmbedding(String),
    #[error("cross scorer failed on passage {passage_id:?}: {message}")]
    ScorerFailure { passage_id: String, message: String },
    #[error("passage {0:?} not in index")]
    UnknownPassage(String),
    #[error("invalid cascade config: {0}")]
    InvalidConfig(String),
    #[error("corpus line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading corpus: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads a JSONL corpus of `{"id", "title", "text"}` records.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Passage>, RetrievalError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Passage = serde_json::from_str(&line).map_err(|e| RetrievalError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}

/// Ranked output of one cascade run with the size of every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOutcome {
    pub passages: Vec<ScoredPassage>,
    pub stage_sizes: [usize; 3],
}

/// Shared, read-only retrieval stack.
#[derive(Clone)]
pub struct RetrievalEngine {
    index: Arc<Index>,
    embedder: Arc<dyn Embedder>,
    sparse: Arc<dyn SparseScorer>,
    cross: Option<Arc<dyn CrossScorer>>,
    config: CascadeConfig,
}

impl std::fmt::Debug for RetrievalEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RetrievalEngine")
            .field("docs", &self.index.len())
            .field("cross", &self.cross.is_some())
            .field("config", &self.config)
            .finish()
    }
}

impl RetrievalEngine {
    pub fn new(
        index: Arc<Index>,
        embedder: Arc<dyn Embedder>,
        sparse: Arc<dyn SparseScorer>,
        config: CascadeConfig,
    ) -> Result<Self, RetrievalError> {
        config.validate()?;
        Ok(Self {
            index,
            embedder,
            sparse,
            cross: None,
            config,
        })
    }

    /// Builds an index over `corpus` with TF-IDF sparse scoring.
    pub fn from_corpus(
        corpus: Vec<Passage>,
        embedder: Arc<dyn Embedder>,
        config: CascadeConfig,
    ) -> Result<Self, RetrievalError> {
        config.validate()?;
        let sparse = Arc::new(TfIdfSparse::fit(&corpus));
        let index = Arc::new(build_index(corpus, embedder.as_ref(), config.ivf())?);
        Self::new(index, embedder, sparse, config)
    }

    pub fn with_cross_scorer(mut self, scorer: Arc<dyn CrossScorer>) -> Self {
        self.cross = Some(scorer);
        self
    }

    pub fn config(&self) -> &CascadeConfig {
        &self.config
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        self.embedder
            .embed(text)
            .map_err(|e| RetrievalError::QueryEmbedding(e.0))
    }

    pub fn dense_search(&self, query: &str, k: usize) -> Result<Vec<ScoredPassage>, RetrievalError> {
        Ok(self.index.dense_search(&self.embed(query)?, k))
    }

    /// dense (k1) → hybrid (k2) → cross (k3).
    pub fn retrieve(&self, query: &str) -> Result<RetrievalOutcome, RetrievalError> {
        let c = &self.config;
        let dense = self.dense_search(query, c.k1)?;
        let n1 = dense.len();
        let hybrid = hybrid_rerank(&self.index, self.sparse.as_ref(), query, dense, c.alpha, c.k2);
        let n2 = hybrid.len();
        let passages = cross_rerank(&self.index, self.cross.as_deref(), query, hybrid, c.k3)?;
        Ok(RetrievalOutcome {
            stage_sizes: [n1, n2, passages.len()],
            passages,
        })
    }

    /// Retrieves for `query` and merges the result into `pool`.
    pub fn expand_pool(&self, query: &str, pool: &mut DocumentPool) -> Result<RetrievalOutcome, RetrievalError> {
        let outcome = self.retrieve(query)?;
        pool.merge(outcome.passages.clone(), self.config.merge_strategy);
        Ok(outcome)
    }
}
