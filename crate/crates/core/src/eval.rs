//! Descriptor-level Recall@k over resampled test sets, and corpus
//! statistics.
//!
//! Each test set pairs every request with one sampled descriptor subset of
//! its track. Evaluation indexes only the keys present in the test set under
//! evaluation and reports the mean and population standard deviation across
//! sets.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DescriptorSet, Track};
use crate::pairgen::{sample_variations, split_sentences, RequestPair};
use crate::ranker::{DescriptorIndex, Encoder, RankError};
use crate::seed::{derive_seed, rng_from_seed};
use crate::tfidf::tokenize;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_SAMPLES: usize = 3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no test sets to evaluate")]
    NoSamples,
    #[error("test set {0} is empty")]
    EmptyTestSet(usize),
    #[error("test sets differ in size ({0} vs {1} requests)")]
    UnequalSets(usize, usize),
    #[error("request {index} refers to unknown track {track_id:?}")]
    UnknownTrack { index: usize, track_id: String },
    #[error("no pairs to summarize")]
    NoPairs,
    #[error(transparent)]
    Rank(#[from] RankError),
}

/// One request with the descriptor set it should retrieve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub request: String,
    pub track_id: String,
    #[serde(rename = "descriptors")]
    pub truth: DescriptorSet,
}

pub type TestSet = Vec<TestCase>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub n_requests: usize,
    /// Distinct truth keys across all test sets.
    pub n_unique_keys: usize,
    pub per_sample_recall: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `per_sample_recall`.
    pub std: f64,
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_samples(k: usize, n_requests: usize, n_unique_keys: usize, per_sample_recall: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&per_sample_recall);
        EvalReport {
            k,
            n_requests,
            n_unique_keys,
            per_sample_recall,
            mean,
            std,
        }
    }

    /// `mean ± std` in percent with one decimal.
    pub fn summary(&self) -> String {
        format!("{:.1} ± {:.1}", self.mean * 100.0, self.std * 100.0)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self, label: &str) -> String {
        let header = format!("Recall@{}", self.k);
        let width = label.len().max("encoder".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>9}  {:>12}", "encoder", header, "#requests", "#descriptors");
        let _ = writeln!(
            out,
            "{:<width$}  {:>12}  {:>9}  {:>12}",
            label,
            self.summary(),
            self.n_requests,
            self.n_unique_keys
        );
        for (i, r) in self.per_sample_recall.iter().enumerate() {
            let _ = writeln!(out, "  sample {i}: {:.4}", r);
        }
        out
    }
}

/// 1 if `truth_key` is among the first `k` ranked keys.
pub fn recall_at_k<S: AsRef<str>>(ranked_keys: &[S], truth_key: &str, k: usize) -> u32 {
    ranked_keys
        .iter()
        .take(k)
        .any(|key| key.as_ref() == truth_key) as u32
}

fn pick_variation(sentence: &str, set: &DescriptorSet, seed: u64) -> DescriptorSet {
    let mut variations = sample_variations(sentence, set, seed);
    let mut rng = rng_from_seed(derive_seed(seed, "pick"));
    let i = rng.gen_range(0..variations.len());
    variations.swap_remove(i)
}

fn sample_seed(rng_seed: u64, sample: usize) -> u64 {
    derive_seed(rng_seed, &format!("sample:{sample}"))
}

/// Builds `n_samples` test sets from caption sentences. Every set holds the
/// same requests in the same order; each draws its own descriptor subsets.
pub fn make_test_samples(corpus: &[Track], n_samples: usize, rng_seed: u64) -> Vec<TestSet> {
    (0..n_samples)
        .map(|s| {
            let seed = sample_seed(rng_seed, s);
            let mut set = Vec::new();
            for track in corpus {
                let track_seed = derive_seed(seed, &track.id);
                for (i, sentence) in split_sentences(&track.caption).into_iter().enumerate() {
                    let sentence_seed = derive_seed(track_seed, &format!("sentence:{i}"));
                    let truth = pick_variation(&sentence, track.descriptor_set(), sentence_seed);
                    set.push(TestCase {
                        request: sentence,
                        track_id: track.id.clone(),
                        truth,
                    });
                }
            }
            set
        })
        .collect()
}

/// Like [`make_test_samples`], but with externally supplied requests (for
/// instance rephrased captions) referencing corpus tracks by id. Only the
/// request text and track id of each record are used.
pub fn make_test_samples_for_requests(
    corpus: &[Track],
    requests: &[RequestPair],
    n_samples: usize,
    rng_seed: u64,
) -> Result<Vec<TestSet>, EvalError> {
    let by_id: HashMap<&str, &Track> = corpus.iter().map(|t| (t.id.as_str(), t)).collect();
    let tracks = requests
        .iter()
        .enumerate()
        .map(|(index, r)| {
            by_id
                .get(r.track_id.as_str())
                .copied()
                .ok_or_else(|| EvalError::UnknownTrack {
                    index,
                    track_id: r.track_id.clone(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..n_samples)
        .map(|s| {
            let seed = sample_seed(rng_seed, s);
            requests
                .iter()
                .zip(&tracks)
                .enumerate()
                .map(|(i, (r, track))| {
                    let case_seed = derive_seed(seed, &format!("request:{i}"));
                    TestCase {
                        request: r.request.clone(),
                        track_id: track.id.clone(),
                        truth: pick_variation(&r.request, track.descriptor_set(), case_seed),
                    }
                })
                .collect()
        })
        .collect())
}

/// Recall@k of one test set against an index of its own keys.
pub fn evaluate_set(encoder: &mut Encoder, set: &[TestCase], k: usize) -> Result<f64, EvalError> {
    let keys: BTreeSet<&str> = set.iter().map(|c| c.truth.key()).collect();
    let index = DescriptorIndex::from_keys(keys.into_iter().map(str::to_owned).collect(), encoder)?;
    let requests: Vec<String> = set.iter().map(|c| c.request.clone()).collect();
    let ranked = index.rank_batch(&requests, k, encoder)?;
    let hits: u32 = ranked
        .iter()
        .zip(set)
        .map(|(hits, case)| {
            let keys: Vec<&str> = hits.iter().map(|h| h.key.as_str()).collect();
            recall_at_k(&keys, case.truth.key(), k)
        })
        .sum();
    Ok(f64::from(hits) / set.len() as f64)
}

pub fn evaluate(encoder: &mut Encoder, test_sets: &[TestSet], k: usize) -> Result<EvalReport, EvalError> {
    if test_sets.is_empty() {
        return Err(EvalError::NoSamples);
    }
    if k == 0 {
        return Err(RankError::ZeroK.into());
    }
    let n_requests = test_sets[0].len();
    let mut recalls = Vec::with_capacity(test_sets.len());
    for (i, set) in test_sets.iter().enumerate() {
        if set.is_empty() {
            return Err(EvalError::EmptyTestSet(i));
        }
        if set.len() != n_requests {
            return Err(EvalError::UnequalSets(n_requests, set.len()));
        }
        recalls.push(evaluate_set(encoder, set, k)?);
    }
    let unique: HashSet<&str> = test_sets.iter().flatten().map(|c| c.truth.key()).collect();
    Ok(EvalReport::from_samples(k, n_requests, unique.len(), recalls))
}

/// Flattens test sets into pairs, tagging each with its sample number.
pub fn test_sets_to_pairs(test_sets: &[TestSet]) -> Vec<RequestPair> {
    test_sets
        .iter()
        .enumerate()
        .flat_map(|(s, set)| {
            set.iter().map(move |c| RequestPair {
                request: c.request.clone(),
                descriptor_set: c.truth.clone(),
                track_id: c.track_id.clone(),
                variation_index: s,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Distinct `(track_id, request)` combinations.
    pub n_requests: usize,
    pub n_unique_keys: usize,
    /// Mean fraction of a pair's distinct descriptor words that also occur
    /// among the request's words.
    pub mean_shared_ratio: f64,
}

/// Fraction of descriptor words present in the request, or `None` when the
/// descriptors contain no word.
pub fn shared_word_ratio(request: &str, descriptors: &DescriptorSet) -> Option<f64> {
    let request_words: HashSet<String> = tokenize(request).into_iter().collect();
    let descriptor_words: HashSet<String> = descriptors.items().iter().flat_map(|d| tokenize(d)).collect();
    if descriptor_words.is_empty() {
        return None;
    }
    let found = descriptor_words.iter().filter(|w| request_words.contains(*w)).count();
    Some(found as f64 / descriptor_words.len() as f64)
}

pub fn dataset_stats(pairs: &[RequestPair]) -> Result<DatasetStats, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let requests: HashSet<(&str, &str)> = pairs
        .iter()
        .map(|p| (p.track_id.as_str(), p.request.as_str()))
        .collect();
    let keys: HashSet<&str> = pairs.iter().map(|p| p.descriptor_set.key()).collect();
    let ratios: Vec<f64> = pairs
        .iter()
        .filter_map(|p| shared_word_ratio(&p.request, &p.descriptor_set))
        .collect();
    let mean_shared_ratio = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    Ok(DatasetStats {
        n_requests: requests.len(),
        n_unique_keys: keys.len(),
        mean_shared_ratio,
    })
}
