//! Request/descriptor pair generation from captioned tracks.
//!
//! Captions are split into sentences; each sentence becomes a request paired
//! with up to three sampled subsets of the track's descriptors. The first
//! subset favours descriptors mentioned in the sentence, later ones mix in
//! descriptors the sentence does not mention.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_descriptor, DescriptorSet, Track};
use crate::seed::{derive_seed, rng_from_seed};

pub const MAX_VARIATIONS: usize = 3;

/// Redraws allowed per variation before giving up on a distinct subset.
const MAX_DRAWS: usize = 32;

const ABBREVIATIONS: [&str; 4] = ["e.g.", "i.e.", "vs.", "etc."];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestPair {
    pub request: String,
    #[serde(rename = "descriptors")]
    pub descriptor_set: DescriptorSet,
    pub track_id: String,
    #[serde(rename = "variation")]
    pub variation_index: usize,
}

fn ends_with_abbreviation(text: &str) -> bool {
    let word = text
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Rule-based sentence splitter: breaks after `.`, `!` or `?` when followed
/// by whitespace, except after a small list of abbreviations.
pub fn split_sentences(caption: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = caption.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let end = i + c.len_utf8();
        let Some(&(_, next)) = chars.peek() else { break };
        if !next.is_whitespace() {
            continue;
        }
        if c == '.' && ends_with_abbreviation(&caption[start..end]) {
            continue;
        }
        let sentence = caption[start..end].trim();
        if !sentence.is_empty() {
            out.push(sentence.to_owned());
        }
        start = end;
    }
    let tail = caption[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_owned());
    }
    out
}

fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    if phrase.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(phrase) {
        let begin = from + pos;
        let end = begin + phrase.len();
        let left_ok = haystack[..begin]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric());
        let right_ok = haystack[end..]
            .chars()
            .next()
            .is_none_or(|c| !c.is_alphanumeric());
        if left_ok && right_ok {
            return true;
        }
        from = begin + haystack[begin..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Splits descriptors into those mentioned in the sentence (whole-phrase,
/// word-boundary match after normalization) and the rest. Both lists keep
/// ascending order.
pub fn partition_by_overlap(sentence: &str, descriptors: &DescriptorSet) -> (Vec<String>, Vec<String>) {
    let normalized = normalize_descriptor(sentence);
    descriptors
        .items()
        .iter()
        .cloned()
        .partition(|d| contains_phrase(&normalized, d))
}

fn random_subset(pool: &[String], rng: &mut ChaCha8Rng) -> Vec<String> {
    let size = rng.gen_range(1..=pool.len());
    pool.choose_multiple(rng, size).cloned().collect()
}

/// Samples up to three distinct descriptor subsets for one sentence.
///
/// 1. a subset of the mentioned descriptors (all descriptors if none are
///    mentioned);
/// 2. every mentioned descriptor plus a subset of the unmentioned ones;
/// 3. a subset of the full set.
///
/// Subset sizes are uniform over `1..=pool`. A variation whose draws keep
/// repeating an earlier key is dropped.
pub fn sample_variations(sentence: &str, descriptors: &DescriptorSet, rng_seed: u64) -> Vec<DescriptorSet> {
    let (overlapping, non_overlapping) = partition_by_overlap(sentence, descriptors);
    let full = descriptors.items();
    let mut rng = rng_from_seed(rng_seed);

    let mut out: Vec<DescriptorSet> = Vec::with_capacity(MAX_VARIATIONS);
    let mut seen: HashSet<String> = HashSet::new();

    for variation in 0..MAX_VARIATIONS {
        for _ in 0..MAX_DRAWS {
            let items = match variation {
                0 if !overlapping.is_empty() => random_subset(&overlapping, &mut rng),
                1 if !overlapping.is_empty() && !non_overlapping.is_empty() => {
                    let mut items = overlapping.clone();
                    items.extend(random_subset(&non_overlapping, &mut rng));
                    items
                }
                _ => random_subset(full, &mut rng),
            };
            let set = DescriptorSet::from_normalized(items.iter());
            if seen.insert(set.key().to_owned()) {
                out.push(set);
                break;
            }
        }
    }
    out
}

fn track_pairs(track: &Track, rng_seed: u64) -> Vec<RequestPair> {
    let track_seed = derive_seed(rng_seed, &track.id);
    split_sentences(&track.caption)
        .into_iter()
        .enumerate()
        .flat_map(|(i, sentence)| {
            let seed = derive_seed(track_seed, &format!("sentence:{i}"));
            sample_variations(&sentence, track.descriptor_set(), seed)
                .into_iter()
                .enumerate()
                .map(move |(v, set)| RequestPair {
                    request: sentence.clone(),
                    descriptor_set: set,
                    track_id: track.id.clone(),
                    variation_index: v,
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Pairs for every sentence of every track, ordered by track, sentence and
/// variation. Each track draws from a seed derived from `(rng_seed, id)`.
pub fn generate_pairs(corpus: &[Track], rng_seed: u64) -> Vec<RequestPair> {
    corpus
        .par_iter()
        .map(|t| track_pairs(t, rng_seed))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
