//! Offline, deterministic stand-ins for an embedding model and a
//! cross-encoder.

use rand::Rng;
use sha2::{Digest, Sha256};

use super::{dense_dot, DenseError, EmbeddingProvider, ProviderInfo, Scorer};
use crate::seed::rng_from_seed;
use crate::tfidf::tokenize;

pub const MOCK_DIM: usize = 64;
pub const MOCK_SEED: u64 = 0x5EED;

fn token_vector(token: &str) -> [f64; MOCK_DIM] {
    let mut hasher = Sha256::new();
    hasher.update(MOCK_SEED.to_le_bytes());
    hasher.update(token.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 8];
    seed.copy_from_slice(&digest[..8]);
    let mut rng = rng_from_seed(u64::from_le_bytes(seed));

    let mut v = [0f64; MOCK_DIM];
    for x in &mut v {
        *x = rng.gen::<f64>() * 2.0 - 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Mean of per-token pseudo-random unit vectors, L2-normalized. Tokens are
/// summed in sorted order so the result depends only on the token multiset.
/// Text without tokens maps to the zero vector.
pub fn mock_embed(text: &str) -> Vec<f32> {
    let mut tokens = tokenize(text);
    if tokens.is_empty() {
        return vec![0.0; MOCK_DIM];
    }
    tokens.sort_unstable();
    let mut acc = [0f64; MOCK_DIM];
    for t in &tokens {
        for (a, x) in acc.iter_mut().zip(token_vector(t)) {
            *a += x;
        }
    }
    let n = tokens.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; MOCK_DIM];
    }
    acc.iter().map(|x| (x / norm) as f32).collect()
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    info: ProviderInfo,
}

impl MockEmbedder {
    pub fn new() -> Self {
        MockEmbedder {
            info: ProviderInfo {
                name: "mock".into(),
                dim: MOCK_DIM,
                normalizes: true,
            },
        }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn info(&self) -> &ProviderInfo {
        &self.info
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, DenseError> {
        Ok(texts.iter().map(|t| mock_embed(t)).collect())
    }
}

/// Scores a pair as the dot product of the two mock embeddings.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockScorer;

impl Scorer for MockScorer {
    fn score(&mut self, pairs: &[(String, String)]) -> Result<Vec<f64>, DenseError> {
        Ok(pairs
            .iter()
            .map(|(q, d)| dense_dot(&mock_embed(q), &mock_embed(d)))
            .collect())
    }
}
