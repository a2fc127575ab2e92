use std::cmp::Ordering;
use std::collections::HashMap;

use super::embed::{Embedder, EmbeddingVector};
use super::{Passage, RetrievalError, ScoredPassage};

/// Inverted-file parameters. Exact search is used when the corpus is smaller than
/// `min_corpus` or when `nprobe >= nlist`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IvfParams {
    pub nlist: usize,
    pub nprobe: usize,
    pub min_corpus: usize,
}

impl Default for IvfParams {
    fn default() -> Self {
        Self {
            nlist: 4096,
            nprobe: 128,
            min_corpus: 100_000,
        }
    }
}

#[derive(Debug)]
struct Ivf {
    centroids: Vec<EmbeddingVector>,
    lists: Vec<Vec<usize>>,
    nprobe: usize,
}

/// Immutable dense index over a corpus.
#[derive(Debug)]
pub struct Index {
    passages: Vec<Passage>,
    vectors: Vec<EmbeddingVector>,
    by_id: HashMap<String, usize>,
    ivf: Option<Ivf>,
}

/// Descending score, then ascending id.
pub(crate) fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_id.cmp(b_id))
}

/// Maps a cosine in [-1, 1] onto [0, 1].
pub fn dense_score(cosine: f64) -> f64 {
    ((cosine + 1.0) / 2.0).clamp(0.0, 1.0)
}

pub fn build_index(
    corpus: Vec<Passage>,
    embedder: &dyn Embedder,
    ivf: IvfParams,
) -> Result<Index, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let mut by_id = HashMap::with_capacity(corpus.len());
    for (i, p) in corpus.iter().enumerate() {
        if by_id.insert(p.id.clone(), i).is_some() {
            return Err(RetrievalError::DuplicateId(p.id.clone()));
        }
    }
    let vectors = corpus
        .iter()
        .map(|p| {
            embedder
                .embed(&p.body)
                .map_err(|e| RetrievalError::EmbedderFailure {
                    passage_id: p.id.clone(),
                    message: e.0,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ivf = (corpus.len() >= ivf.min_corpus && ivf.nprobe < ivf.nlist)
        .then(|| train_ivf(&vectors, ivf.nlist.min(corpus.len()), ivf.nprobe));
    Ok(Index {
        passages: corpus,
        vectors,
        by_id,
        ivf,
    })
}

fn nearest(centroids: &[EmbeddingVector], v: &EmbeddingVector) -> usize {
    centroids
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| {
            a.cosine(v)
                .partial_cmp(&b.cosine(v))
                .unwrap_or(Ordering::Equal)
                .then(j.cmp(i))
        })
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Spherical k-means with deterministic strided seeding.
fn train_ivf(vectors: &[EmbeddingVector], nlist: usize, nprobe: usize) -> Ivf {
    let stride = vectors.len() / nlist;
    let mut centroids: Vec<EmbeddingVector> =
        (0..nlist).map(|i| vectors[i * stride].clone()).collect();
    let mut assign = vec![0usize; vectors.len()];
    for _ in 0..10 {
        for (a, v) in assign.iter_mut().zip(vectors) {
            *a = nearest(&centroids, v);
        }
        let dim = vectors[0].dim();
        let mut sums = vec![vec![0.0; dim]; nlist];
        for (a, v) in assign.iter().zip(vectors) {
            for (s, x) in sums[*a].iter_mut().zip(v.components()) {
                *s += x;
            }
        }
        for (c, s) in centroids.iter_mut().zip(sums) {
            if s.iter().any(|x| *x != 0.0) {
                *c = EmbeddingVector::normalized(s);
            }
        }
    }
    let mut lists = vec![Vec::new(); nlist];
    for (i, v) in vectors.iter().enumerate() {
        lists[nearest(&centroids, v)].push(i);
    }
    Ivf {
        centroids,
        lists,
        nprobe: nprobe.max(1),
    }
}

impl Index {
    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    pub fn vector(&self, id: &str) -> Option<&EmbeddingVector> {
        self.by_id.get(id).map(|&i| &self.vectors[i])
    }

    pub fn uses_ivf(&self) -> bool {
        self.ivf.is_some()
    }

    fn candidates(&self, query: &EmbeddingVector) -> Vec<usize> {
        match &self.ivf {
            None => (0..self.passages.len()).collect(),
            Some(ivf) => {
                let mut order: Vec<(usize, f64)> = ivf
                    .centroids
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, c.cosine(query)))
                    .collect();
                order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
                order
                    .iter()
                    .take(ivf.nprobe)
                    .flat_map(|(c, _)| ivf.lists[*c].iter().copied())
                    .collect()
            }
        }
    }

    /// Top-`k` passages by cosine similarity to `query`.
    pub fn dense_search(&self, query: &EmbeddingVector, k: usize) -> Vec<ScoredPassage> {
        let mut scored: Vec<(usize, f64)> = self
            .candidates(query)
            .into_iter()
            .map(|i| (i, dense_score(self.vectors[i].cosine(query))))
            .collect();
        scored.sort_by(|a, b| {
            rank_order(a.1, &self.passages[a.0].id, b.1, &self.passages[b.0].id)
        });
        scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(r, (i, s))| ScoredPassage::dense(&self.passages[i].id, s, r + 1))
            .collect()
    }
}
