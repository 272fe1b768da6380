//! Text embedders. The default is a hashed term-frequency embedder with
//! per-bucket inverse document frequency, L2-normalized.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RetrievalError;
use crate::transport::{EndpointConfig, JsonClient};

pub const DEFAULT_DIM: usize = 256;

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;
}

/// Lowercased maximal alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// 64-bit FNV-1a. Fixed here so bucket assignment never changes between
/// releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

pub fn bucket(token: &str, dim: usize) -> usize {
    (fnv1a(token.as_bytes()) % dim as u64) as usize
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashedEmbedder {
    dim: usize,
    idf: Vec<f64>,
    id: String,
}

impl HashedEmbedder {
    /// Embedder with unit IDF weights.
    pub fn untrained(dim: usize) -> Self {
        Self::from_idf(vec![1.0; dim.max(1)])
    }

    /// Fits per-bucket IDF weights `ln((N + 1) / (df + 1)) + 1` on `texts`.
    pub fn fit<'a>(dim: usize, texts: impl IntoIterator<Item = &'a str>) -> Self {
        let dim = dim.max(1);
        let mut df = vec![0usize; dim];
        let mut n = 0usize;
        let mut seen = vec![false; dim];
        for text in texts {
            n += 1;
            seen.iter_mut().for_each(|s| *s = false);
            for tok in tokenize(text) {
                let b = bucket(&tok, dim);
                if !seen[b] {
                    seen[b] = true;
                    df[b] += 1;
                }
            }
        }
        let idf = df
            .iter()
            .map(|&d| ((n as f64 + 1.0) / (d as f64 + 1.0)).ln() + 1.0)
            .collect();
        Self::from_idf(idf)
    }

    pub fn from_idf(idf: Vec<f64>) -> Self {
        let mut hasher = Sha256::new();
        for w in &idf {
            hasher.update(w.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        let short: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        let dim = idf.len();
        Self {
            dim,
            idf,
            id: format!("hashed-tfidf-fnv1a/d{dim}/{short}"),
        }
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in tokenize(text) {
            let b = bucket(&tok, self.dim);
            v[b] += self.idf[b];
        }
        l2_normalize(&mut v);
        v
    }
}

impl Embedder for HashedEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        Ok(self.embed_text(text))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

/// Delegates to an HTTP endpoint accepting `{input}` and returning
/// `{embedding: [f64]}`. Results are L2-normalized locally.
#[derive(Debug)]
pub struct RemoteEmbedder {
    client: JsonClient,
    id: String,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(config: EndpointConfig, id: impl Into<String>, dim: usize) -> Result<Self, RetrievalError> {
        Ok(Self {
            client: JsonClient::new(config)?,
            id: id.into(),
            dim,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let resp: EmbedResponse = self.client.post(&EmbedRequest { input: text })?;
        if resp.embedding.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                found: resp.embedding.len(),
            });
        }
        let mut v = resp.embedding;
        l2_normalize(&mut v);
        Ok(v)
    }
}
