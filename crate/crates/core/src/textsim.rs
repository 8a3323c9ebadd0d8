//! Embedding cosine and normalized Levenshtein similarity, the two channels
//! used by segmentation.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, ProviderError, Result};
use crate::par::{self, ExecMode};
use crate::retry::{Fault, RetryPolicy};

pub type EmbeddingVector = Arc<[f64]>;

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identity; part of the cache key.
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Token-hash bag of words, L2-normalized. Deterministic and offline.
#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    dim: usize,
    id: String,
}

impl LocalHashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> LocalHashEmbedder {
        assert!(dim > 0, "embedding dimension must be positive");
        LocalHashEmbedder {
            dim,
            id: format!("local-hash/{dim}"),
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in normalize(text).split(' ').filter(|t| !t.is_empty()) {
            v[(fnv1a(tok.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for LocalHashEmbedder {
    fn default() -> Self {
        LocalHashEmbedder::new(Self::DEFAULT_DIM)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for LocalHashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Speaks `{"texts": [..]} -> {"vectors": [[..]]}` over HTTP.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    pub url: String,
    pub dim: usize,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl RemoteEmbedder {
    /// Reads the bearer token from `EMBED_API_KEY`.
    pub fn from_env(url: impl Into<String>, dim: usize, retry: RetryPolicy) -> RemoteEmbedder {
        RemoteEmbedder {
            url: url.into(),
            dim,
            api_key: std::env::var("EMBED_API_KEY").ok(),
            timeout: Duration::from_secs(30),
            retry,
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.url
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        #[derive(Deserialize)]
        struct Resp {
            vectors: Vec<Vec<f64>>,
        }
        let body = serde_json::json!({ "texts": texts });
        let (res, attempts) = self.retry.run(|_| {
            let v = crate::http::post_json(&self.url, self.api_key.as_deref(), &body, self.timeout)?;
            serde_json::from_value::<Resp>(v)
                .map_err(|e| Fault::permanent(format!("malformed embedding response: {e}")))
        });
        let resp = res.map_err(|f| ProviderError {
            provider: format!("embedding {}", self.url),
            message: f.message,
            attempts,
        })?;
        if resp.vectors.len() != texts.len() {
            return Err(ProviderError {
                provider: format!("embedding {}", self.url),
                message: format!("{} vectors for {} texts", resp.vectors.len(), texts.len()),
                attempts,
            }
            .into());
        }
        Ok(resp.vectors)
    }
}

/// A provider plus a cache keyed by (provider id, text). Cached results are
/// shared, so repeated calls return bitwise-identical vectors.
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    cache: RwLock<HashMap<(String, String), EmbeddingVector>>,
}

impl Embedder {
    pub fn new(provider: impl EmbeddingProvider + 'static) -> Embedder {
        Embedder {
            provider: Box::new(provider),
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn local() -> Embedder {
        Embedder::new(LocalHashEmbedder::default())
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn dimension(&self) -> usize {
        self.provider.dimension()
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let id = self.provider.id().to_string();
        let mut missing: Vec<String> = {
            let cache = self.cache.read().expect("embedding cache poisoned");
            texts
                .iter()
                .filter(|t| !cache.contains_key(&(id.clone(), (*t).clone())))
                .cloned()
                .collect()
        };
        missing.sort();
        missing.dedup();
        if !missing.is_empty() {
            let vectors = self.provider.embed_batch(&missing)?;
            let dim = self.provider.dimension();
            if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: bad.len(),
                });
            }
            let mut cache = self.cache.write().expect("embedding cache poisoned");
            for (t, v) in missing.into_iter().zip(vectors) {
                // first writer wins so concurrent callers agree
                cache.entry((id.clone(), t)).or_insert_with(|| v.into());
            }
        }
        let cache = self.cache.read().expect("embedding cache poisoned");
        Ok(texts.iter().map(|t| cache[&(id.clone(), t.clone())].clone()).collect())
    }
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("provider", &self.provider.id())
            .finish()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(cosine_unchecked(a, b))
}

fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Lowercases, drops punctuation and collapses runs of whitespace.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if c.is_alphanumeric() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Classic unit-cost edit distance over any comparable sequence.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn lev_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = normalize(a).chars().collect();
    let b: Vec<char> = normalize(b).chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(&a, &b) as f64 / longest as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Embedding,
    Levenshtein,
}

/// Row-major |U|×|Q| matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub rows: usize,
    pub cols: usize,
    pub channel: Channel,
    cells: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds from row-major cells; keeps the column count even with no rows.
    pub fn from_cells(channel: Channel, rows: usize, cols: usize, cells: Vec<f64>) -> SimilarityMatrix {
        assert_eq!(cells.len(), rows * cols, "cell count does not match shape");
        SimilarityMatrix {
            rows,
            cols,
            channel,
            cells,
        }
    }

    pub fn from_rows(channel: Channel, rows: Vec<Vec<f64>>) -> SimilarityMatrix {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged similarity rows");
        SimilarityMatrix {
            rows: rows.len(),
            cols,
            channel,
            cells: rows.into_iter().flatten().collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.cols..(i + 1) * self.cols]
    }

    /// Maximum of each column (the list T).
    pub fn column_maxima(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Sub-matrix restricted to the given row and column indices.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> SimilarityMatrix {
        let cells = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| self.get(i, j)))
            .collect();
        SimilarityMatrix::from_cells(self.channel, rows.len(), cols.len(), cells)
    }
}

pub fn similarity_matrix(
    utterances: &[Utterance],
    questions: &[String],
    channel: Channel,
    embedder: &Embedder,
) -> Result<SimilarityMatrix> {
    similarity_matrix_with(ExecMode::default(), utterances, questions, channel, embedder)
}

pub fn similarity_matrix_with(
    mode: ExecMode,
    utterances: &[Utterance],
    questions: &[String],
    channel: Channel,
    embedder: &Embedder,
) -> Result<SimilarityMatrix> {
    if utterances.is_empty() || questions.is_empty() {
        return Err(Error::EmptyInput(
            "similarity matrix needs utterances and questions".into(),
        ));
    }
    let rows = match channel {
        Channel::Embedding => {
            let texts: Vec<String> = utterances.iter().map(|u| u.text.clone()).collect();
            let ue = embedder.embed(&texts)?;
            let qe = embedder.embed(questions)?;
            par::map(mode, &ue, |u| qe.iter().map(|q| cosine_unchecked(u, q)).collect())
        }
        Channel::Levenshtein => par::map(mode, utterances, |u| {
            questions.iter().map(|q| lev_similarity(&u.text, q)).collect()
        }),
    };
    Ok(SimilarityMatrix::from_rows(channel, rows))
}
