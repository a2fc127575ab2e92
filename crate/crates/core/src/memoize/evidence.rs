use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::retrieval::{EmbedError, Embedder, EmbeddingVector};

/// Default similarity threshold for reusing a cached answer.
pub const DEFAULT_TAU: f64 = 0.85;

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceEntry {
    pub subquestion_text: String,
    /// Embedding of `subquestion_text`.
    pub embedding: EmbeddingVector,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheHit {
    pub answer: String,
    pub similarity: f64,
    pub entry_index: usize,
    pub matched_subquestion: String,
}

/// Cache of (subquestion, answer) pairs. Owned by one question unless shared
/// explicitly in global mode.
#[derive(Debug, Clone, Default)]
pub struct EvidenceStore {
    entries: Vec<EvidenceEntry>,
    question_id: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ExportRecord<'a> {
    subquestion: &'a str,
    answer: &'a str,
}

impl EvidenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn for_question(question_id: &str) -> Self {
        Self {
            entries: Vec::new(),
            question_id: Some(question_id.to_string()),
        }
    }

    pub fn question_id(&self) -> Option<&str> {
        self.question_id.as_deref()
    }

    pub fn entries(&self) -> &[EvidenceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Best entry by cosine similarity if it reaches `tau`; ties go to the earliest entry.
    pub fn lookup_vector(&self, query: &EmbeddingVector, tau: f64) -> Option<CacheHit> {
        debug_assert!(tau > 0.0 && tau <= 1.0);
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let s = e.embedding.cosine(query);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let (i, s) = best?;
        (s >= tau).then(|| CacheHit {
            answer: self.entries[i].answer.clone(),
            similarity: s,
            entry_index: i,
            matched_subquestion: self.entries[i].subquestion_text.clone(),
        })
    }

    pub fn lookup(
        &self,
        subquestion: &str,
        tau: f64,
        embedder: &dyn Embedder,
    ) -> Result<Option<CacheHit>, EmbedError> {
        if self.entries.is_empty() {
            return Ok(None);
        }
        Ok(self.lookup_vector(&embedder.embed(subquestion)?, tau))
    }

    pub fn store_answer(
        &mut self,
        subquestion: &str,
        answer: &str,
        embedder: &dyn Embedder,
    ) -> Result<(), EmbedError> {
        let embedding = embedder.embed(subquestion)?;
        self.entries.push(EvidenceEntry {
            subquestion_text: subquestion.to_string(),
            embedding,
            answer: answer.to_string(),
        });
        Ok(())
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Writes `{subquestion, answer}` JSONL.
    pub fn export(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.entries {
            let rec = ExportRecord {
                subquestion: &e.subquestion_text,
                answer: &e.answer,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}
