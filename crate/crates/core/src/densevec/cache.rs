use std::collections::HashMap;

use super::{DenseError, EmbeddingProvider, ProviderInfo};

/// Memoizes rows by exact text. Only texts missing from the cache are sent
/// to the inner provider, deduplicated, in first-seen order.
pub struct CachedProvider<P> {
    inner: P,
    cache: HashMap<String, Vec<f32>>,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P) -> Self {
        CachedProvider {
            inner,
            cache: HashMap::new(),
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.len()
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn info(&self) -> &ProviderInfo {
        self.inner.info()
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, DenseError> {
        let mut missing: Vec<String> = Vec::new();
        for t in texts {
            if !self.cache.contains_key(t) && !missing.contains(t) {
                missing.push(t.clone());
            }
        }
        if !missing.is_empty() {
            let rows = self.inner.embed_batch(&missing)?;
            if rows.len() != missing.len() {
                return Err(DenseError::CountMismatch {
                    expected: missing.len(),
                    got: rows.len(),
                });
            }
            self.cache.extend(missing.into_iter().zip(rows));
        }
        Ok(texts.iter().map(|t| self.cache[t].clone()).collect())
    }
}
