#![allow(dead_code)]

use descrank::{make_descriptor_set, DescriptorSet, Track};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const WORDS: &[&str] = &[
    "pop", "sad", "jazz", "rock", "piano", "guitar", "slow", "fast", "calm", "loud", "male", "vocal",
    "drums", "bass", "happy", "dark",
];

pub fn word(rng: &mut ChaCha8Rng) -> &'static str {
    WORDS.choose(rng).unwrap()
}

pub fn phrase(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.gen_range(1..=max_words);
    (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

pub fn random_set(rng: &mut ChaCha8Rng) -> DescriptorSet {
    let n = rng.gen_range(1..=3);
    let raw: Vec<String> = (0..n).map(|_| phrase(rng, 2)).collect();
    make_descriptor_set(&raw).unwrap()
}

pub fn random_corpus(rng: &mut ChaCha8Rng, tracks: usize) -> Vec<Track> {
    (0..tracks)
        .map(|i| {
            let n_desc = rng.gen_range(1..=5);
            let descriptors: Vec<String> = (0..n_desc).map(|_| phrase(rng, 2)).collect();
            let n_sent = rng.gen_range(1..=3);
            let caption = (0..n_sent)
                .map(|_| {
                    let mut s = phrase(rng, 6);
                    s.push('.');
                    s
                })
                .collect::<Vec<_>>()
                .join(" ");
            Track::new(format!("track-{i}"), caption, descriptors).unwrap()
        })
        .collect()
}

/// Sequential f64 dot product, written independently of the library.
pub fn oracle_dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        s += a[i] as f64 * b[i] as f64;
    }
    s
}

/// Full stable sort of all keys by descending score, then ascending key.
pub fn oracle_rank(query: &[f32], keys: &[String], vectors: &[Vec<f32>]) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = keys
        .iter()
        .zip(vectors)
        .map(|(k, v)| (k.clone(), oracle_dot(query, v)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all
}
