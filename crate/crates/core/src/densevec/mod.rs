//! Dense embeddings: provider abstraction, on-disk matrices, caching.
//!
//! Similarity is always the raw dot product of `f32` rows accumulated in
//! `f64`, left to right. No cosine conversion is applied, even for
//! providers that already L2-normalize.

mod cache;
mod format;
mod mock;
pub mod wire;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::CachedProvider;
pub use format::{load_matrix, read_matrix, save_matrix, write_matrix, FormatError, MAGIC, VERSION};
pub use mock::{mock_embed, MockEmbedder, MockScorer, MOCK_DIM, MOCK_SEED};
pub use wire::{WireClient, WireEmbedder};

#[derive(Debug, Error)]
pub enum DenseError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("row {row}: provider returned {got} values, expected {expected}")]
    DimMismatch { row: usize, expected: usize, got: usize },
    #[error("row {row}: non-finite value")]
    NonFiniteValue { row: usize },
    #[error("provider returned {got} results for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("{ids} ids for {rows} rows")]
    IdCountMismatch { ids: usize, rows: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("provider error: {0}")]
    Remote(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("cannot embed an empty text list")]
    EmptyInput,
}

/// What a provider reports during the handshake.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub name: String,
    pub dim: usize,
    pub normalizes: bool,
}

/// Source of dense text embeddings.
pub trait EmbeddingProvider {
    fn info(&self) -> &ProviderInfo;

    /// Raw rows in input order. Callers go through [`embed`], which
    /// validates width and finiteness.
    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, DenseError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn info(&self) -> &ProviderInfo {
        (**self).info()
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, DenseError> {
        (**self).embed_batch(texts)
    }
}

/// Cross-encoder style pair scorer.
pub trait Scorer {
    fn score(&mut self, pairs: &[(String, String)]) -> Result<Vec<f64>, DenseError>;
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score(&mut self, pairs: &[(String, String)]) -> Result<Vec<f64>, DenseError> {
        (**self).score(pairs)
    }
}

/// Row-major `f32` vectors of a fixed width, without identities.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    dim: usize,
    data: Vec<f32>,
}

impl Embeddings {
    pub fn from_rows(dim: usize, rows: Vec<Vec<f32>>) -> Result<Self, DenseError> {
        let mut data = Vec::with_capacity(dim * rows.len());
        for (row, values) in rows.into_iter().enumerate() {
            if values.len() != dim {
                return Err(DenseError::DimMismatch {
                    row,
                    expected: dim,
                    got: values.len(),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(DenseError::NonFiniteValue { row });
            }
            data.extend(values);
        }
        Ok(Embeddings { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Dense rows keyed by unique text identities.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    rows: Embeddings,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, rows: Embeddings) -> Result<Self, DenseError> {
        if ids.len() != rows.len() {
            return Err(DenseError::IdCountMismatch {
                ids: ids.len(),
                rows: rows.len(),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(DenseError::DuplicateId(id.clone()));
            }
        }
        Ok(EmbeddingMatrix { ids, rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.rows.row(i)
    }

    pub fn embeddings(&self) -> &Embeddings {
        &self.rows
    }

    /// Multiplies every row by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self, DenseError> {
        let data: Vec<f32> = self.rows.data.iter().map(|v| v * factor).collect();
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DenseError::NonFiniteValue {
                row: pos / self.dim().max(1),
            });
        }
        Ok(EmbeddingMatrix {
            ids: self.ids.clone(),
            rows: Embeddings {
                dim: self.rows.dim,
                data,
            },
        })
    }
}

/// Embeds `texts` and checks every row against the provider's declared
/// width.
pub fn embed<P: EmbeddingProvider + ?Sized>(
    provider: &mut P,
    texts: &[String],
) -> Result<Embeddings, DenseError> {
    if texts.is_empty() {
        return Err(DenseError::EmptyInput);
    }
    let dim = provider.info().dim;
    let rows = provider.embed_batch(texts)?;
    if rows.len() != texts.len() {
        return Err(DenseError::CountMismatch {
            expected: texts.len(),
            got: rows.len(),
        });
    }
    Embeddings::from_rows(dim, rows)
}

/// Dot product of two rows, accumulated in `f64`.
pub fn dense_dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum()
}
