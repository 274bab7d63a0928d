use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed `{0}`: no alphanumeric content")]
    Empty(String),
    #[error("embedding service transport failure: {0}")]
    Transport(String),
    #[error("embedding service returned HTTP {0}")]
    HttpStatus(u16),
    #[error("malformed embedding response: {0}")]
    Malformed(String),
    #[error("embedding for `{text}` has dimension {found}, expected {expected}")]
    Dimension { text: String, expected: usize, found: usize },
}

/// Maps text to a unit-length vector of fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }

    fn dimension(&self) -> usize;

    /// Identifies the configuration; persisted indexes record it.
    fn fingerprint(&self) -> String;
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(mut v: Vec<f32>, text: &str) -> Result<Vec<f32>, EmbedError> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbedError::Empty(text.to_string()));
    }
    v.iter_mut().for_each(|x| *x = (f64::from(*x) / norm) as f32);
    Ok(v)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Character-trigram embedder. Text is lowercased, non-alphanumerics become
/// word breaks, each word is padded with one space on both sides, and every
/// trigram is hashed into a bucket. Bucket weights are `1 + ln(tf)` times an
/// optional IDF factor.
#[derive(Debug, Clone)]
pub struct HashedTrigramEmbedder {
    dim: usize,
    idf: Option<Arc<HashMap<usize, f32>>>,
}

impl Default for HashedTrigramEmbedder {
    fn default() -> Self {
        Self::new(512)
    }
}

impl HashedTrigramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        HashedTrigramEmbedder { dim, idf: None }
    }

    fn buckets(&self, text: &str) -> BTreeMap<usize, u32> {
        let cleaned: String = text
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect();
        let mut counts = BTreeMap::new();
        for word in cleaned.split_whitespace() {
            let padded: Vec<char> = format!(" {word} ").chars().collect();
            for w in padded.windows(3) {
                let gram: String = w.iter().collect();
                *counts.entry((fnv1a(gram.as_bytes()) % self.dim as u64) as usize).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Weights buckets by smoothed inverse document frequency over `corpus`.
    pub fn fit_idf<'a>(mut self, corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: HashMap<usize, u32> = HashMap::new();
        let mut n = 0u32;
        for doc in corpus {
            n += 1;
            for b in self.buckets(doc).into_keys() {
                *df.entry(b).or_insert(0) += 1;
            }
        }
        let idf = df
            .into_iter()
            .map(|(b, d)| (b, ((1.0 + n as f32) / (1.0 + d as f32)).ln() + 1.0))
            .collect();
        self.idf = Some(Arc::new(idf));
        self
    }
}

impl EmbeddingProvider for HashedTrigramEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut v = vec![0f32; self.dim];
        for (b, c) in self.buckets(text) {
            let idf = self.idf.as_ref().map_or(1.0, |m| m.get(&b).copied().unwrap_or(1.0));
            v[b] = (1.0 + (c as f32).ln()) * idf;
        }
        normalize(v, text)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        match &self.idf {
            None => format!("trigram-fnv1a/{}", self.dim),
            Some(idf) => {
                let mut entries: Vec<(&usize, &f32)> = idf.iter().collect();
                entries.sort_by_key(|(b, _)| **b);
                let mut h = Sha256::new();
                for (b, w) in entries {
                    h.update(b.to_le_bytes());
                    h.update(w.to_le_bytes());
                }
                format!("trigram-fnv1a/{}/idf-{}", self.dim, &hex::encode(h.finalize())[..16])
            }
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for an embedding service: POST `{"texts": [...]}` returning
/// `{"vectors": [[...], ...]}`. Returned vectors are re-normalized.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    url: String,
    dim: usize,
    http: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(url: &str, dim: usize, timeout: Duration) -> Result<Self, EmbedError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(HttpEmbedder {
            url: url.to_string(),
            dim,
            http,
        })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        Ok(self.embed_batch(&[text.to_string()])?.remove(0))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self
            .http
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbedError::HttpStatus(resp.status().as_u16()));
        }
        let body: EmbedResponse = resp.json().map_err(|e| EmbedError::Malformed(e.to_string()))?;
        if body.vectors.len() != texts.len() {
            return Err(EmbedError::Malformed(format!(
                "{} vectors for {} texts",
                body.vectors.len(),
                texts.len()
            )));
        }
        body.vectors
            .into_iter()
            .zip(texts)
            .map(|(v, t)| {
                if v.len() != self.dim {
                    return Err(EmbedError::Dimension {
                        text: t.clone(),
                        expected: self.dim,
                        found: v.len(),
                    });
                }
                normalize(v, t)
            })
            .collect()
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("http/{}/{}", self.url, self.dim)
    }
}
