use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::ScoredPassage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeStrategy {
    /// New documents are placed ahead of the existing pool.
    #[default]
    RecentFirst,
    /// New documents are appended after the existing pool.
    AppendEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub passage: ScoredPassage,
    /// Retrieval round the document entered the pool in (0 = initial retrieval).
    pub round: u32,
}

/// Cumulative, deduplicated, capped set of candidate documents for one subquestion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentPool {
    entries: Vec<PoolEntry>,
    #[serde(skip)]
    seen: HashSet<String>,
    cap: usize,
    rounds: u32,
}

impl DocumentPool {
    pub fn new(cap: usize) -> Self {
        Self {
            entries: Vec::new(),
            seen: HashSet::new(),
            cap,
            rounds: 0,
        }
    }

    /// Pool seeded with an initial retrieval (round 0).
    pub fn from_initial(results: Vec<ScoredPassage>, cap: usize) -> Self {
        let mut pool = Self::new(cap);
        pool.insert_round(results, 0, MergeStrategy::AppendEnd);
        pool
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn passages(&self) -> impl Iterator<Item = &ScoredPassage> {
        self.entries.iter().map(|e| &e.passage)
    }

    pub fn ids(&self) -> Vec<String> {
        self.passages().map(|p| p.passage_id.clone()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.seen.contains(id)
    }

    fn insert_round(&mut self, results: Vec<ScoredPassage>, round: u32, strategy: MergeStrategy) -> usize {
        let mut fresh = Vec::new();
        for p in results {
            if self.seen.insert(p.passage_id.clone()) {
                fresh.push(PoolEntry { passage: p, round });
            }
        }
        let added = fresh.len();
        match strategy {
            MergeStrategy::RecentFirst => {
                fresh.append(&mut self.entries);
                self.entries = fresh;
            }
            MergeStrategy::AppendEnd => self.entries.append(&mut fresh),
        }
        if self.entries.len() > self.cap {
            for dropped in self.entries.drain(self.cap..) {
                self.seen.remove(&dropped.passage.passage_id);
            }
        }
        added
    }

    /// Merges a new retrieval with ID deduplication, then truncates to the cap.
    /// Returns how many previously unseen documents were offered.
    pub fn merge(&mut self, results: Vec<ScoredPassage>, strategy: MergeStrategy) -> usize {
        self.rounds += 1;
        self.insert_round(results, self.rounds, strategy)
    }

    /// Documents handed to the solver: the `k` newest while retries remain, otherwise
    /// the `k` earliest.
    pub fn select(&self, k: usize, retries_exhausted: bool) -> Vec<ScoredPassage> {
        let mut order: Vec<&PoolEntry> = self.entries.iter().collect();
        if retries_exhausted {
            order.sort_by_key(|e| e.round);
        } else {
            order.sort_by_key(|e| std::cmp::Reverse(e.round));
        }
        order.into_iter().take(k).map(|e| e.passage.clone()).collect()
    }

    /// Builds a pool from an explicit selection, keeping it as round 0.
    pub fn from_selection(selection: Vec<ScoredPassage>, cap: usize) -> Self {
        Self::from_initial(selection, cap)
    }
}
