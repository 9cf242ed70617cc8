//! Training-data factory: hard-negative mining with one or more retrievers
//! and margin labels from a cross-encoder teacher.
//!
//! For a request `r` with positive key `p`, each retriever contributes its
//! top keys other than `p`; the lists are merged round-robin, deduplicated
//! and truncated. Every `(r, p, n)` triple is labelled with
//! `score(r, p) - score(r, n)`.

use std::collections::{BTreeSet, HashSet};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densevec::{DenseError, Scorer};
use crate::pairgen::RequestPair;
use crate::ranker::{DescriptorIndex, Encoder, RankError};

/// Negatives kept per request.
pub const DEFAULT_TOTAL_NEGATIVES: usize = 30;
/// Candidates taken from each of the two default retrievers.
pub const DEFAULT_PER_RETRIEVER_K: usize = 15;

#[derive(Debug, Error)]
pub enum GplError {
    #[error("at least one retriever is required")]
    NoRetrievers,
    #[error("negative count must be at least 1")]
    ZeroTotal,
    #[error("no pairs to process")]
    NoPairs,
    #[error("mining failed")]
    Mining(#[from] RankError),
    #[error("pair {pair_index} (track {track_id:?}): scorer failed")]
    Scoring {
        pair_index: usize,
        track_id: String,
        #[source]
        source: DenseError,
    },
    #[error("scorer failed")]
    Scorer(#[from] DenseError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTriple {
    #[serde(rename = "query")]
    pub request: String,
    #[serde(rename = "pos")]
    pub positive_key: String,
    #[serde(rename = "neg")]
    pub negative_key: String,
    pub margin: f64,
}

/// An index paired with the encoder that produced it.
pub struct Retriever {
    pub index: DescriptorIndex,
    pub encoder: Encoder,
}

impl Retriever {
    pub fn build(keys: Vec<String>, mut encoder: Encoder) -> Result<Self, RankError> {
        let index = DescriptorIndex::from_keys(keys, &mut encoder)?;
        Ok(Retriever { index, encoder })
    }

    /// Top `k` keys per request, skipping each request's positive.
    fn candidates(&mut self, requests: &[String], positives: &[&str], k: usize) -> Result<Vec<Vec<String>>, RankError> {
        let ranked = self.index.rank_batch(requests, k + 1, &mut self.encoder)?;
        Ok(ranked
            .into_iter()
            .zip(positives)
            .map(|(hits, pos)| {
                hits.into_iter()
                    .map(|h| h.key)
                    .filter(|key| key != pos)
                    .take(k)
                    .collect()
            })
            .collect())
    }
}

/// Unique keys of `pairs`, sorted; the default mining universe.
pub fn training_keys(pairs: &[RequestPair]) -> Vec<String> {
    pairs
        .iter()
        .map(|p| p.descriptor_set.key().to_owned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Interleaves ranked lists position by position, keeping first
/// occurrences, and stops at `total`.
pub fn round_robin_merge(lists: &[Vec<String>], total: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let depth = lists.iter().map(Vec::len).max().unwrap_or(0);
    'outer: for i in 0..depth {
        for list in lists {
            if let Some(key) = list.get(i) {
                if seen.insert(key.as_str()) {
                    out.push(key.clone());
                    if out.len() == total {
                        break 'outer;
                    }
                }
            }
        }
    }
    out
}

fn mine_batch(
    requests: &[String],
    positives: &[&str],
    retrievers: &mut [Retriever],
    per_retriever_k: usize,
    total: usize,
) -> Result<Vec<Vec<String>>, GplError> {
    if retrievers.is_empty() {
        return Err(GplError::NoRetrievers);
    }
    if total == 0 {
        return Err(GplError::ZeroTotal);
    }
    let per_retriever = retrievers
        .iter_mut()
        .map(|r| r.candidates(requests, positives, per_retriever_k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..requests.len())
        .map(|i| {
            let lists: Vec<Vec<String>> = per_retriever.iter().map(|c| c[i].clone()).collect();
            round_robin_merge(&lists, total)
        })
        .collect())
}

pub fn mine_negatives(
    request: &str,
    positive_key: &str,
    retrievers: &mut [Retriever],
    per_retriever_k: usize,
    total: usize,
) -> Result<Vec<String>, GplError> {
    Ok(mine_batch(&[request.to_owned()], &[positive_key], retrievers, per_retriever_k, total)?
        .pop()
        .expect("one request"))
}

/// Teacher margin `score(r, pos) - score(r, neg)`.
pub fn margin_label<S: Scorer + ?Sized>(
    request: &str,
    positive_key: &str,
    negative_key: &str,
    scorer: &mut S,
) -> Result<f64, DenseError> {
    let scores = scorer.score(&[
        (request.to_owned(), positive_key.to_owned()),
        (request.to_owned(), negative_key.to_owned()),
    ])?;
    if scores.len() != 2 {
        return Err(DenseError::CountMismatch {
            expected: 2,
            got: scores.len(),
        });
    }
    Ok(scores[0] - scores[1])
}

/// Labels one request against its positive and each negative in a single
/// scorer call.
pub fn label_negatives<S: Scorer + ?Sized>(
    request: &str,
    positive_key: &str,
    negatives: &[String],
    scorer: &mut S,
) -> Result<Vec<TrainingTriple>, DenseError> {
    let mut batch = Vec::with_capacity(negatives.len() + 1);
    batch.push((request.to_owned(), positive_key.to_owned()));
    batch.extend(negatives.iter().map(|n| (request.to_owned(), n.clone())));
    let scores = scorer.score(&batch)?;
    if scores.len() != batch.len() {
        return Err(DenseError::CountMismatch {
            expected: batch.len(),
            got: scores.len(),
        });
    }
    Ok(negatives
        .iter()
        .zip(&scores[1..])
        .map(|(neg, s)| TrainingTriple {
            request: request.to_owned(),
            positive_key: positive_key.to_owned(),
            negative_key: neg.clone(),
            margin: scores[0] - s,
        })
        .collect())
}

/// Mined negatives for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedNegatives {
    #[serde(rename = "query")]
    pub request: String,
    #[serde(rename = "pos")]
    pub positive_key: String,
    #[serde(rename = "negs")]
    pub negatives: Vec<String>,
    #[serde(default)]
    pub track_id: String,
}

pub fn mine_pairs(
    pairs: &[RequestPair],
    retrievers: &mut [Retriever],
    per_retriever_k: usize,
    total: usize,
) -> Result<Vec<MinedNegatives>, GplError> {
    if pairs.is_empty() {
        return Err(GplError::NoPairs);
    }
    let requests: Vec<String> = pairs.iter().map(|p| p.request.clone()).collect();
    let positives: Vec<&str> = pairs.iter().map(|p| p.descriptor_set.key()).collect();
    let mined = mine_batch(&requests, &positives, retrievers, per_retriever_k, total)?;
    Ok(pairs
        .iter()
        .zip(mined)
        .map(|(p, negatives)| MinedNegatives {
            request: p.request.clone(),
            positive_key: p.descriptor_set.key().to_owned(),
            negatives,
            track_id: p.track_id.clone(),
        })
        .collect())
}

/// Labels mined negatives; entries without negatives are skipped.
pub fn label_mined<S: Scorer + ?Sized>(
    mined: &[MinedNegatives],
    scorer: &mut S,
) -> Result<TripleExport, GplError> {
    let mut triples = Vec::new();
    let mut skipped = 0;
    for (pair_index, m) in mined.iter().enumerate() {
        if m.negatives.is_empty() {
            skipped += 1;
            continue;
        }
        let labelled = label_negatives(&m.request, &m.positive_key, &m.negatives, scorer).map_err(|source| {
            GplError::Scoring {
                pair_index,
                track_id: m.track_id.clone(),
                source,
            }
        })?;
        triples.extend(labelled);
    }
    if skipped > 0 {
        info!("skipped {skipped} pair(s) without mined negatives");
    }
    Ok(TripleExport { triples, skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleExport {
    pub triples: Vec<TrainingTriple>,
    /// Pairs for which mining produced no negative.
    pub skipped: usize,
}

/// Mines and labels every pair. Output order follows pair order, then each
/// pair's merged negative order.
pub fn generate_triples<S: Scorer + ?Sized>(
    pairs: &[RequestPair],
    retrievers: &mut [Retriever],
    scorer: &mut S,
    negatives_per_pair: usize,
    per_retriever_k: usize,
) -> Result<TripleExport, GplError> {
    let mined = mine_pairs(pairs, retrievers, per_retriever_k, negatives_per_pair)?;
    label_mined(&mined, scorer)
}
