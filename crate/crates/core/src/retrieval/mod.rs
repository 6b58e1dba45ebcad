//! Text embeddings and exact nearest-neighbour search.
//!
//! Two embedding providers are available: [`HashEmbedder`], a deterministic
//! feature-hashing model used offline, and [`HttpEmbedder`], which talks to an
//! OpenAI-compatible `/embeddings` endpoint:
//!
//! ```text
//! POST {base_url}/embeddings
//! {"model": "<model>", "input": ["<text>"]}
//!
//! 200 OK
//! {"data": [{"index": 0, "embedding": [0.01, -0.2, ...]}], ...}
//! ```

mod index;

pub use index::{Scored, VectorIndex};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::http::{HttpError, JsonClient, RetryPolicy};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("id already present in index")]
    DuplicateId,
    #[error("embedding request failed: {0}")]
    Http(#[from] HttpError),
    #[error("malformed embedding response: {0}")]
    BadResponse(String),
}

/// Dense embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 || !denom.is_finite() {
        return 0.0;
    }
    (dot / denom).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding, RetrievalError>;
}

/// Deterministic embedder hashing word unigrams and bigrams into a fixed
/// number of signed buckets (FNV-1a, seeded), then L2-normalising.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    fn bucket(&self, feature: &str) -> (usize, f64) {
        let h = fnv1a(self.seed, feature.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.dim as u64) as usize, sign)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, RetrievalError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let tokens = words(text);
        let mut features: Vec<String> = tokens.iter().map(|w| format!("u:{w}")).collect();
        features.extend(tokens.windows(2).map(|w| format!("b:{} {}", w[0], w[1])));
        if features.is_empty() {
            features.push(format!("r:{text}"));
        }
        let mut v = vec![0.0; self.dim];
        for f in &features {
            let (i, sign) = self.bucket(f);
            v[i] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Embedding(v))
    }
}

/// Embedder backed by an OpenAI-compatible embeddings endpoint.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: JsonClient,
    url: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, dim: usize, retry: RetryPolicy) -> Self {
        Self {
            client: JsonClient::new(retry, Duration::from_secs(60)),
            url: format!("{}/embeddings", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            dim,
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, RetrievalError> {
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let body = json!({ "model": self.model, "input": [text] });
        let reply = self.client.post(&self.url, self.api_key.as_deref(), &body)?;
        let parsed: EmbeddingResponse =
            serde_json::from_value(reply.body).map_err(|e| RetrievalError::BadResponse(e.to_string()))?;
        let values = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| RetrievalError::BadResponse("empty data array".into()))?
            .embedding;
        if values.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                actual: values.len(),
            });
        }
        Ok(Embedding(values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::stub::StubServer;

    #[test]
    fn hash_embedder_is_deterministic_and_normalised() {
        let emb = HashEmbedder::new(64, 7);
        let a = emb.embed("Choose the correct option").unwrap();
        assert_eq!(a, emb.embed("Choose the correct option").unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_ne!(a, HashEmbedder::new(64, 8).embed("Choose the correct option").unwrap());
    }

    #[test]
    fn empty_text_is_rejected() {
        let emb = HashEmbedder::new(16, 0);
        assert!(matches!(emb.embed(""), Err(RetrievalError::EmptyText)));
        assert!(matches!(emb.embed("   \n"), Err(RetrievalError::EmptyText)));
        assert!(emb.embed("?!").unwrap().norm() > 0.0);
    }

    #[test]
    fn cosine_handles_zero_vectors() {
        let z = Embedding::new(vec![0.0, 0.0]);
        let a = Embedding::new(vec![1.0, 2.0]);
        assert_eq!(cosine(&z, &a), 0.0);
    }

    #[test]
    fn http_embedder_parses_openai_shape() {
        let server = StubServer::start(vec![
            (503, "{}".into()),
            (200, r#"{"data":[{"index":0,"embedding":[0.5,-0.5,1.0]}],"model":"m"}"#.into()),
        ]);
        let retry = RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(1),
        };
        let emb = HttpEmbedder::new(&server.url, "m", Some("k".into()), 3, retry);
        let v = emb.embed("hello").unwrap();
        assert_eq!(v.values(), &[0.5, -0.5, 1.0]);
        let requests = server.join();
        assert!(requests[1].starts_with("POST /embeddings"));
        assert!(requests[1].contains(r#""input":["hello"]"#));
        assert!(requests[1].to_ascii_lowercase().contains("authorization: bearer k"));
    }
}
