//! Embedding providers and cosine similarity.
//!
//! Thought texts become unit-length vectors through a pluggable
//! [`EmbeddingProvider`]. Production runs talk to an OpenAI-compatible
//! embeddings endpoint; tests use [`MockEmbedder`] (seeded hash-to-sphere,
//! a pure function of `(seed, text)`) or [`FixtureEmbedder`] (explicit
//! text-to-vector table) when exact similarity values must be scripted.
//!
//! All vectors are L2-normalized on the way in, so cosine similarity is a
//! plain dot product.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// A unit-length embedding vector.
pub type Embedding = Vec<f64>;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding request failed after {attempts} attempts: {source}")]
    Transport {
        attempts: u32,
        #[source]
        source: reqwest::Error,
    },
    #[error("embedding service returned status {status}: {body}")]
    Service { status: u16, body: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding response malformed: {0}")]
    MalformedResponse(String),
    #[error("no fixture vector registered for text {0:?}")]
    MissingFixture(String),
    #[error("embed called with empty input")]
    EmptyInput,
}

impl EmbedError {
    /// Dimension mismatches are configuration bugs; transport errors are
    /// retryable at the question level.
    pub fn is_fatal(&self) -> bool {
        matches!(self, EmbedError::DimensionMismatch { .. })
    }
}

/// Source of embedding vectors.
pub trait EmbeddingProvider: Send + Sync {
    /// Embeds each text into a unit vector. One vector per input text,
    /// same order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError>;

    fn dimension(&self) -> usize;

    fn embed_one(&self, text: &str) -> Result<Embedding, EmbedError> {
        Ok(self.embed(std::slice::from_ref(&text.to_string()))?.remove(0))
    }
}

/// Cosine similarity of two unit vectors: their dot product, clamped to
/// [-1, 1] against rounding.
///
/// Panics on dimension mismatch; providers enforce a uniform dimension so
/// a mismatch here is a logic error.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(
        a.len(),
        b.len(),
        "cosine called with mismatched dimensions {} vs {}",
        a.len(),
        b.len()
    );
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0)
}

/// Scales a vector to unit L2 norm in place. Zero vectors are left alone.
pub fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Deterministic mock: maps each text to a pseudo-random point on the
/// unit sphere keyed by `(seed, text)`. Equal texts give equal vectors;
/// distinct texts are near-orthogonal in expectation at high dimension.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    seed: u64,
    dimension: usize,
}

impl MockEmbedder {
    pub fn new(seed: u64, dimension: usize) -> Self {
        Self { seed, dimension }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(0, crate::defaults::DEFAULT_EMBED_DIM)
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        Ok(texts
            .iter()
            .map(|text| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(text.as_bytes()));
                let mut v: Vec<f64> = (0..self.dimension)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                normalize(&mut v);
                v
            })
            .collect())
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

/// Mock backed by an explicit text-to-vector table, for tests that need
/// exact similarity values. Unknown texts fall back to the hash-to-sphere
/// construction when a fallback seed is set, otherwise they error.
#[derive(Debug, Clone)]
pub struct FixtureEmbedder {
    table: HashMap<String, Embedding>,
    fallback: Option<MockEmbedder>,
    dimension: usize,
}

impl FixtureEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self {
            table: HashMap::new(),
            fallback: None,
            dimension,
        }
    }

    pub fn with_fallback(dimension: usize, seed: u64) -> Self {
        Self {
            table: HashMap::new(),
            fallback: Some(MockEmbedder::new(seed, dimension)),
            dimension,
        }
    }

    /// Registers a vector for `text`. The vector is normalized on entry.
    pub fn insert(&mut self, text: impl Into<String>, mut vector: Embedding) {
        assert_eq!(vector.len(), self.dimension, "fixture vector dimension");
        normalize(&mut vector);
        self.table.insert(text.into(), vector);
    }
}

impl EmbeddingProvider for FixtureEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        texts
            .iter()
            .map(|text| {
                if let Some(v) = self.table.get(text) {
                    Ok(v.clone())
                } else if let Some(mock) = &self.fallback {
                    Ok(mock.embed(std::slice::from_ref(text))?.remove(0))
                } else {
                    Err(EmbedError::MissingFixture(text.clone()))
                }
            })
            .collect()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

/// Configuration of the HTTP embedding client.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    /// Full URL of the embeddings endpoint, e.g. `http://host:8080/v1/embeddings`.
    pub endpoint: String,
    pub model_name: String,
    pub dimension: usize,
    pub batch_size: usize,
    pub max_retries: u32,
    /// Upper bound on concurrent in-flight batch requests.
    pub max_in_flight: usize,
    #[serde(default)]
    pub api_key: Option<String>,
}

impl HttpEmbedderConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_name: crate::defaults::DEFAULT_EMBED_MODEL.to_string(),
            dimension: crate::defaults::DEFAULT_EMBED_DIM,
            batch_size: 32,
            max_retries: 3,
            max_in_flight: 4,
            api_key: None,
        }
    }
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingsItem>,
}

#[derive(Deserialize)]
struct EmbeddingsItem {
    index: usize,
    embedding: Vec<f64>,
}

/// Client for an OpenAI-compatible embeddings endpoint
/// (`POST` with JSON body `{"model": ..., "input": [...]}`).
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .expect("building HTTP client");
        Self { config, client }
    }

    fn embed_batch(&self, batch: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let mut req = self.client.post(&self.config.endpoint).json(&EmbeddingsRequest {
                model: &self.config.model_name,
                input: batch,
            });
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let parsed: EmbeddingsResponse = resp
                        .json()
                        .map_err(|e| EmbedError::MalformedResponse(e.to_string()))?;
                    return self.collect_batch(batch.len(), parsed);
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    // 5xx is worth retrying; 4xx is a hard config error.
                    if status >= 500 && attempts <= self.config.max_retries {
                        std::thread::sleep(backoff(attempts));
                        continue;
                    }
                    let body = resp.text().unwrap_or_default();
                    return Err(EmbedError::Service { status, body });
                }
                Err(source) => {
                    if attempts <= self.config.max_retries {
                        std::thread::sleep(backoff(attempts));
                        continue;
                    }
                    return Err(EmbedError::Transport { attempts, source });
                }
            }
        }
    }

    fn collect_batch(
        &self,
        expected: usize,
        parsed: EmbeddingsResponse,
    ) -> Result<Vec<Embedding>, EmbedError> {
        if parsed.data.len() != expected {
            return Err(EmbedError::MalformedResponse(format!(
                "expected {expected} embeddings, got {}",
                parsed.data.len()
            )));
        }
        let mut out = vec![Vec::new(); expected];
        for item in parsed.data {
            if item.embedding.len() != self.config.dimension {
                return Err(EmbedError::DimensionMismatch {
                    expected: self.config.dimension,
                    got: item.embedding.len(),
                });
            }
            if item.index >= expected {
                return Err(EmbedError::MalformedResponse(format!(
                    "embedding index {} out of range",
                    item.index
                )));
            }
            let mut v = item.embedding;
            normalize(&mut v);
            out[item.index] = v;
        }
        Ok(out)
    }
}

fn backoff(attempt: u32) -> std::time::Duration {
    std::time::Duration::from_millis(100 * 2u64.pow(attempt.min(6)))
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let batches: Vec<&[String]> = texts.chunks(self.config.batch_size.max(1)).collect();
        let mut results: Vec<Option<Vec<Embedding>>> = vec![None; batches.len()];
        // Issue up to max_in_flight batch requests concurrently.
        for group in (0..batches.len()).collect::<Vec<_>>().chunks(self.config.max_in_flight.max(1))
        {
            let outcomes: Vec<(usize, Result<Vec<Embedding>, EmbedError>)> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = group
                        .iter()
                        .map(|&i| {
                            let batch = batches[i];
                            scope.spawn(move || (i, self.embed_batch(batch)))
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("embed worker")).collect()
                });
            for (i, outcome) in outcomes {
                results[i] = Some(outcome?);
            }
        }
        Ok(results.into_iter().flat_map(|r| r.expect("batch filled")).collect())
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }
}
