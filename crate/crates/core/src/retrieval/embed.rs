use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::text::{fnv1a, informative_tokens};

/// Unit-normalized dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    components: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `raw` to unit length. An all-zero input maps to the first basis vector
    /// so that every text, including the empty one, has a defined embedding.
    pub fn normalized(mut raw: Vec<f64>) -> Self {
        assert!(!raw.is_empty(), "embedding dimension must be positive");
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            raw.iter_mut().for_each(|x| *x /= norm);
        } else {
            raw.iter_mut().for_each(|x| *x = 0.0);
            raw[0] = 1.0;
        }
        Self { components: raw }
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Cosine similarity; both vectors are unit length so this is the dot product.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Error)]
#[error("embedding failed: {0}")]
pub struct EmbedError(pub String);

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Signed feature hashing over informative unigrams and adjacent bigrams.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        Self { dim }
    }

    fn add(&self, v: &mut [f64], feature: &str, weight: f64) {
        let h = fnv1a(feature.as_bytes());
        let slot = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        v[slot] += sign * weight;
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let tokens = informative_tokens(text);
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            self.add(&mut v, t, 1.0);
        }
        for pair in tokens.windows(2) {
            self.add(&mut v, &format!("{} {}", pair[0], pair[1]), 0.5);
        }
        Ok(EmbeddingVector::normalized(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
}

/// Embedding endpoint speaking `{model, input}` → `data[0].embedding`.
#[derive(Debug)]
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| EmbedError(e.to_string()))?;
        Ok(Self { config, client })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut req = self
            .client
            .post(&self.config.endpoint)
            .json(&json!({"model": self.config.model, "input": text}));
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let value: serde_json::Value = req
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| EmbedError(e.to_string()))?;
        let raw: Vec<f64> = value
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| EmbedError("missing data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| EmbedError("non-numeric component".into())))
            .collect::<Result<_, _>>()?;
        if raw.is_empty() {
            return Err(EmbedError("empty embedding".into()));
        }
        Ok(EmbeddingVector::normalized(raw))
    }
}
