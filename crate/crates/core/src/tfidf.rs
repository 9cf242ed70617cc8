//! tf-idf sparse encoder.
//!
//! Smoothed idf `ln((1 + N) / (1 + df)) + 1`, raw term counts, L2
//! normalization. Columns are assigned in sorted token order so a model
//! depends only on the multiset of fitted documents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TfIdfError {
    #[error("cannot fit tf-idf on an empty document list")]
    NoDocuments,
    #[error("no document produced any token")]
    NoTokens,
}

/// Lowercased maximal runs of Unicode letters and digits.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Sparse vector with strictly ascending column indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds a vector from entries; they are sorted and must not repeat an
    /// index.
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        SparseVector { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

/// Sum of products over matching indices.
pub fn dot(a: &SparseVector, b: &SparseVector) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (a, b) = (&a.entries, &b.entries);
    let mut sum = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    n_docs: usize,
    vocabulary: BTreeMap<String, u32>,
    idf: Vec<f64>,
}

impl TfIdfModel {
    pub fn fit<S: AsRef<str>>(docs: &[S]) -> Result<Self, TfIdfError> {
        if docs.is_empty() {
            return Err(TfIdfError::NoDocuments);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let mut tokens = tokenize(doc.as_ref());
            tokens.sort_unstable();
            tokens.dedup();
            for t in tokens {
                *df.entry(t).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(TfIdfError::NoTokens);
        }
        let n = docs.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (col, (token, count)) in df.into_iter().enumerate() {
            idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
            vocabulary.insert(token, col as u32);
        }
        Ok(TfIdfModel {
            n_docs: docs.len(),
            vocabulary,
            idf,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn vocab_len(&self) -> usize {
        self.idf.len()
    }

    pub fn column(&self, token: &str) -> Option<u32> {
        self.vocabulary.get(token).copied()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.column(token).map(|c| self.idf[c as usize])
    }

    /// Encodes text; out-of-vocabulary tokens are dropped and an all-OOV
    /// text yields the empty vector.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for token in tokenize(text) {
            if let Some(col) = self.column(&token) {
                *counts.entry(col).or_default() += 1;
            }
        }
        let mut entries: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(col, tf)| (col, tf as f64 * self.idf[col as usize]))
            .collect();
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        SparseVector { entries }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }
}
