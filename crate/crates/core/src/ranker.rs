//! Exact dot-product ranking of requests against unique descriptor keys.
//!
//! Scores are sorted descending; exact ties go to the smaller key. Keys are
//! stored in ascending order, so ties resolve by row position.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DescriptorSet;
use crate::densevec::{
    dense_dot, embed, read_matrix, write_matrix, DenseError, EmbeddingMatrix, EmbeddingProvider,
    FormatError, MAGIC,
};
use crate::tfidf::{self, SparseVector, TfIdfError, TfIdfModel};

#[derive(Debug, Error)]
pub enum RankError {
    #[error("cannot build an index from zero descriptor sets")]
    EmptyIndex,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("index was built with a {index} encoder but queried with {query}")]
    BackendMismatch {
        index: &'static str,
        query: &'static str,
    },
    #[error("index keys must be unique and ascending")]
    UnsortedKeys,
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    TfIdf(#[from] TfIdfError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("sparse index file: {0}")]
    SparseFile(String),
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// How text is turned into vectors.
pub enum Encoder {
    /// tf-idf fitted on the index keys.
    TfIdf,
    /// Dense provider embedding both keys and requests.
    Dense(Box<dyn EmbeddingProvider>),
}

impl Encoder {
    pub fn dense(provider: impl EmbeddingProvider + 'static) -> Self {
        Encoder::Dense(Box::new(provider))
    }

    fn kind(&self) -> &'static str {
        match self {
            Encoder::TfIdf => "tfidf",
            Encoder::Dense(_) => "dense",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Backend {
    Dense(EmbeddingMatrix),
    Sparse {
        model: TfIdfModel,
        rows: Vec<SparseVector>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorIndex {
    keys: Vec<String>,
    backend: Backend,
}

/// A ranked key with its similarity to the request.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub key: String,
    pub score: f64,
}

fn sorted_unique_keys(sets: &[DescriptorSet]) -> Vec<String> {
    let mut keys: Vec<String> = sets.iter().map(|s| s.key().to_owned()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

fn check_sorted(keys: &[String]) -> Result<(), RankError> {
    if keys.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(RankError::UnsortedKeys)
    }
}

/// Deduplicates the sets by key and encodes one row per unique key.
pub fn build_index(sets: &[DescriptorSet], encoder: &mut Encoder) -> Result<DescriptorIndex, RankError> {
    DescriptorIndex::from_keys(sorted_unique_keys(sets), encoder)
}

pub fn rank(
    request: &str,
    index: &DescriptorIndex,
    k: usize,
    encoder: &mut Encoder,
) -> Result<Vec<Hit>, RankError> {
    index.rank(request, k, encoder)
}

enum Query {
    Dense(Vec<f32>),
    Sparse(SparseVector),
}

impl DescriptorIndex {
    /// `keys` must be unique; they are sorted here.
    pub fn from_keys(mut keys: Vec<String>, encoder: &mut Encoder) -> Result<Self, RankError> {
        if keys.is_empty() {
            return Err(RankError::EmptyIndex);
        }
        keys.sort_unstable();
        check_sorted(&keys)?;
        let backend = match encoder {
            Encoder::TfIdf => {
                let model = TfIdfModel::fit(&keys)?;
                let rows = keys.iter().map(|k| model.transform(k)).collect();
                Backend::Sparse { model, rows }
            }
            Encoder::Dense(provider) => {
                let rows = embed(provider.as_mut(), &keys)?;
                Backend::Dense(EmbeddingMatrix::new(keys.clone(), rows)?)
            }
        };
        Ok(DescriptorIndex { keys, backend })
    }

    /// Wraps a precomputed matrix whose ids are the keys.
    pub fn from_matrix(matrix: EmbeddingMatrix) -> Result<Self, RankError> {
        if matrix.is_empty() {
            return Err(RankError::EmptyIndex);
        }
        check_sorted(matrix.ids())?;
        Ok(DescriptorIndex {
            keys: matrix.ids().to_vec(),
            backend: Backend::Dense(matrix),
        })
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn matrix(&self) -> Option<&EmbeddingMatrix> {
        match &self.backend {
            Backend::Dense(m) => Some(m),
            Backend::Sparse { .. } => None,
        }
    }

    pub fn tfidf_model(&self) -> Option<&TfIdfModel> {
        match &self.backend {
            Backend::Sparse { model, .. } => Some(model),
            Backend::Dense(_) => None,
        }
    }

    fn backend_kind(&self) -> &'static str {
        match self.backend {
            Backend::Dense(_) => "dense",
            Backend::Sparse { .. } => "tfidf",
        }
    }

    fn encode_queries(&self, requests: &[String], encoder: &mut Encoder) -> Result<Vec<Query>, RankError> {
        match (&self.backend, encoder) {
            (Backend::Sparse { model, .. }, Encoder::TfIdf) => {
                Ok(requests.iter().map(|r| Query::Sparse(model.transform(r))).collect())
            }
            (Backend::Dense(m), Encoder::Dense(provider)) => {
                let rows = embed(provider.as_mut(), requests)?;
                if rows.dim() != m.dim() {
                    return Err(DenseError::DimMismatch {
                        row: 0,
                        expected: m.dim(),
                        got: rows.dim(),
                    }
                    .into());
                }
                Ok(rows.rows().map(|r| Query::Dense(r.to_vec())).collect())
            }
            (_, encoder) => Err(RankError::BackendMismatch {
                index: self.backend_kind(),
                query: encoder.kind(),
            }),
        }
    }

    fn scores(&self, query: &Query) -> Vec<f64> {
        match (&self.backend, query) {
            (Backend::Dense(m), Query::Dense(q)) => {
                m.embeddings().rows().map(|row| dense_dot(q, row)).collect()
            }
            (Backend::Sparse { rows, .. }, Query::Sparse(q)) => {
                rows.iter().map(|row| tfidf::dot(q, row)).collect()
            }
            _ => unreachable!("query encoded for this backend"),
        }
    }

    fn top_k(&self, scores: &[f64], k: usize) -> Vec<Hit> {
        // Row order equals key order, so ascending row breaks ties.
        let by_rank = |a: &usize, b: &usize| -> Ordering {
            scores[*b].total_cmp(&scores[*a]).then(a.cmp(b))
        };
        let mut order: Vec<usize> = (0..scores.len()).collect();
        let k = k.min(order.len());
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, by_rank);
            order.truncate(k);
        }
        order.sort_unstable_by(by_rank);
        order
            .into_iter()
            .map(|i| Hit {
                key: self.keys[i].clone(),
                score: scores[i],
            })
            .collect()
    }

    pub fn rank(&self, request: &str, k: usize, encoder: &mut Encoder) -> Result<Vec<Hit>, RankError> {
        Ok(self
            .rank_batch(&[request.to_owned()], k, encoder)?
            .pop()
            .expect("one result per request"))
    }

    /// Ranks many requests; encoding happens in one provider call and the
    /// scans run in parallel.
    pub fn rank_batch(
        &self,
        requests: &[String],
        k: usize,
        encoder: &mut Encoder,
    ) -> Result<Vec<Vec<Hit>>, RankError> {
        if k == 0 {
            return Err(RankError::ZeroK);
        }
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let queries = self.encode_queries(requests, encoder)?;
        Ok(queries
            .par_iter()
            .map(|q| self.top_k(&self.scores(q), k))
            .collect())
    }

    /// Dense indexes are stored as a `DVEC` matrix, tf-idf indexes as JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RankError> {
        let path = path.as_ref();
        let io = |source| RankError::Io {
            path: path.to_owned(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        match &self.backend {
            Backend::Dense(m) => write_matrix(m, &mut w).map_err(io)?,
            Backend::Sparse { model, .. } => {
                serde_json::to_writer(
                    &mut w,
                    &SparseIndexFile {
                        keys: self.keys.clone(),
                        model: model.clone(),
                    },
                )
                .map_err(|e| RankError::SparseFile(e.to_string()))?;
                w.write_all(b"\n").map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RankError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| RankError::Io {
            path: path.to_owned(),
            source,
        })?;
        if bytes.starts_with(MAGIC) {
            return Self::from_matrix(read_matrix(bytes.as_slice())?);
        }
        let file: SparseIndexFile =
            serde_json::from_slice(&bytes).map_err(|e| RankError::SparseFile(e.to_string()))?;
        if file.keys.is_empty() {
            return Err(RankError::EmptyIndex);
        }
        check_sorted(&file.keys)?;
        let rows = file.keys.iter().map(|k| file.model.transform(k)).collect();
        Ok(DescriptorIndex {
            keys: file.keys,
            backend: Backend::Sparse {
                model: file.model,
                rows,
            },
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SparseIndexFile {
    keys: Vec<String>,
    model: TfIdfModel,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::make_descriptor_set;
    use crate::densevec::{Embeddings, MockEmbedder};

    fn sets(raw: &[&[&str]]) -> Vec<DescriptorSet> {
        raw.iter().map(|r| make_descriptor_set(r.iter()).unwrap()).collect()
    }

    fn matrix(ids: &[&str], rows: Vec<Vec<f32>>) -> EmbeddingMatrix {
        let dim = rows[0].len();
        EmbeddingMatrix::new(
            ids.iter().map(|s| s.to_string()).collect(),
            Embeddings::from_rows(dim, rows).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn dedups_keys() {
        let s = sets(&[&["pop"], &["sad", "pop"], &["Pop"], &["pop", "sad"], &["jazz"]]);
        let idx = build_index(&s, &mut Encoder::dense(MockEmbedder::new())).unwrap();
        assert_eq!(idx.keys(), ["jazz", "pop", "pop, sad"]);
        assert_eq!(idx.matrix().unwrap().len(), 3);
    }

    #[test]
    fn input_order_irrelevant() {
        let a = sets(&[&["pop"], &["jazz"], &["rock", "sad"]]);
        let mut b = a.clone();
        b.reverse();
        let ia = build_index(&a, &mut Encoder::dense(MockEmbedder::new())).unwrap();
        let ib = build_index(&b, &mut Encoder::dense(MockEmbedder::new())).unwrap();
        assert_eq!(ia, ib);
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_matrix(ia.matrix().unwrap(), &mut ba).unwrap();
        write_matrix(ib.matrix().unwrap(), &mut bb).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            build_index(&[], &mut Encoder::TfIdf),
            Err(RankError::EmptyIndex)
        ));
    }

    #[test]
    fn zero_k_rejected() {
        let idx = build_index(&sets(&[&["pop"]]), &mut Encoder::TfIdf).unwrap();
        assert!(matches!(rank("pop", &idx, 0, &mut Encoder::TfIdf), Err(RankError::ZeroK)));
    }

    /// Provider that returns fixed vectors for known texts.
    struct Table(Vec<(&'static str, Vec<f32>)>, crate::densevec::ProviderInfo);

    impl EmbeddingProvider for Table {
        fn info(&self) -> &crate::densevec::ProviderInfo {
            &self.1
        }
        fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, DenseError> {
            Ok(texts
                .iter()
                .map(|t| self.0.iter().find(|(k, _)| k == t).unwrap().1.clone())
                .collect())
        }
    }

    fn table(entries: Vec<(&'static str, Vec<f32>)>) -> Encoder {
        let dim = entries[0].1.len();
        Encoder::dense(Table(
            entries,
            crate::densevec::ProviderInfo {
                name: "table".into(),
                dim,
                normalizes: true,
            },
        ))
    }

    #[test]
    fn exact_match_ranks_first() {
        let idx = DescriptorIndex::from_matrix(matrix(
            &["a", "b", "c"],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        ))
        .unwrap();
        let mut enc = table(vec![("q", vec![0.0, 1.0, 0.0])]);
        let hits = rank("q", &idx, 3, &mut enc).unwrap();
        assert_eq!(hits[0], Hit { key: "b".into(), score: 1.0 });
        assert_eq!(hits[1].score, 0.0);
    }

    #[test]
    fn ties_break_by_ascending_key() {
        let idx = DescriptorIndex::from_matrix(matrix(
            &["a", "b", "c", "d"],
            vec![vec![0.5, 0.5]; 4],
        ))
        .unwrap();
        let mut enc = table(vec![("q", vec![1.0, 1.0])]);
        let keys: Vec<String> = rank("q", &idx, 4, &mut enc)
            .unwrap()
            .into_iter()
            .map(|h| h.key)
            .collect();
        assert_eq!(keys, ["a", "b", "c", "d"]);
        let top2: Vec<String> = rank("q", &idx, 2, &mut enc).unwrap().into_iter().map(|h| h.key).collect();
        assert_eq!(top2, ["a", "b"]);
    }

    #[test]
    fn k_larger_than_index() {
        let idx = build_index(&sets(&[&["pop"], &["jazz"]]), &mut Encoder::TfIdf).unwrap();
        let hits = rank("pop", &idx, 10, &mut Encoder::TfIdf).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].key, "pop");
    }

    #[test]
    fn backend_mismatch() {
        let idx = build_index(&sets(&[&["pop"]]), &mut Encoder::TfIdf).unwrap();
        let err = rank("pop", &idx, 1, &mut Encoder::dense(MockEmbedder::new())).unwrap_err();
        assert!(matches!(err, RankError::BackendMismatch { .. }));
    }

    #[test]
    fn save_and_load_both_backends() {
        let dir = tempfile::tempdir().unwrap();
        let s = sets(&[&["pop", "sad"], &["jazz"], &["rock"]]);
        for (name, mut enc) in [
            ("d.idx", Encoder::dense(MockEmbedder::new())),
            ("s.idx", Encoder::TfIdf),
        ] {
            let idx = build_index(&s, &mut enc).unwrap();
            let path = dir.path().join(name);
            idx.save(&path).unwrap();
            let back = DescriptorIndex::load(&path).unwrap();
            assert_eq!(back, idx);
            assert_eq!(
                rank("sad pop", &back, 3, &mut enc).unwrap(),
                rank("sad pop", &idx, 3, &mut enc).unwrap()
            );
        }
    }

    #[test]
    fn unsorted_matrix_rejected() {
        let m = matrix(&["b", "a"], vec![vec![1.0], vec![1.0]]);
        assert!(matches!(DescriptorIndex::from_matrix(m), Err(RankError::UnsortedKeys)));
    }
}
