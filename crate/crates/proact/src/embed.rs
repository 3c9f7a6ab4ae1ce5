//! Text embedding abstraction shared by persona retrieval and delivery
//! gating. The default backend is an exact sparse bag-of-words embedder
//! (deterministic, dependency-free); a remote HTTP backend is available
//! for real sentence encoders.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding backend unavailable: {0}")]
    Backend(String),
    #[error("embedding response malformed: {0}")]
    Malformed(String),
}

/// A unit-norm sparse vector keyed by component name. Empty text embeds
/// to the zero vector; similarity against it is defined as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    components: BTreeMap<String, f64>,
}

impl Embedding {
    pub fn zero() -> Self {
        Embedding { components: BTreeMap::new() }
    }

    /// Normalizes the raw components to unit L2 norm. All-zero input
    /// collapses to the zero embedding.
    pub fn from_components(raw: BTreeMap<String, f64>) -> Self {
        let norm = raw.values().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Embedding::zero();
        }
        Embedding {
            components: raw.into_iter().map(|(k, v)| (k, v / norm)).collect(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Embedding::from_components(
            values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i.to_string(), *v))
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.components.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.components.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn dot(&self, other: &Embedding) -> f64 {
        let (small, large) = if self.components.len() <= other.components.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .components
            .iter()
            .filter_map(|(k, v)| large.components.get(k).map(|w| v * w))
            .sum()
    }
}

/// Cosine similarity; embeddings are stored unit-norm so this is a dot
/// product, clamped to [-1, 1]. Zero vectors give similarity 0.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    if a.is_zero() || b.is_zero() {
        return 0.0;
    }
    a.dot(b).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;
}

/// Exact sparse bag-of-words over lowercased whitespace tokens,
/// L2-normalized. Deterministic; token-disjoint texts have similarity
/// exactly 0 and identical texts exactly 1.
#[derive(Debug, Default, Clone)]
pub struct BagOfWordsEmbedder;

impl Embedder for BagOfWordsEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for token in text.split_whitespace() {
            *counts.entry(token.to_lowercase()).or_insert(0.0) += 1.0;
        }
        Ok(Embedding::from_components(counts))
    }
}

#[derive(Debug, Deserialize)]
struct RemoteEmbedResponse {
    embedding: Vec<f64>,
}

/// Remote embedding endpoint: POST {"input": text} to `url`, expecting
/// {"embedding": [..]} back.
pub struct RemoteEmbedder {
    url: String,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, timeout_s: f64) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs_f64(timeout_s))
            .build()
            .expect("http client");
        RemoteEmbedder { url: url.into(), client }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&serde_json::json!({ "input": text }))
            .send()
            .map_err(|e| EmbedError::Backend(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbedError::Backend(format!("status {}", resp.status())));
        }
        let body: RemoteEmbedResponse = resp
            .json()
            .map_err(|e| EmbedError::Malformed(e.to_string()))?;
        Ok(Embedding::from_dense(&body.embedding))
    }
}
