//! Retrieval over sets of high-level item descriptors.
//!
//! A catalog item carries a short list of descriptors ("acoustic guitar",
//! "sad", ...). Descriptor lists are canonicalized into a [`DescriptorSet`]
//! whose sorted, comma-joined key is the retrieval unit. Requests written in
//! natural language are ranked against the unique keys with an exact
//! dot-product scan, using either a tf-idf sparse encoder or a dense
//! embedding provider.
//!
//! Besides ranking, the crate builds training data (request/descriptor pairs,
//! mined hard negatives labelled with teacher margins) and evaluates
//! encoders with descriptor-level Recall@k over resampled test sets.

pub mod cli;
pub mod corpus;
pub mod densevec;
pub mod eval;
pub mod gpl;
pub mod jsonl;
pub mod pairgen;
pub mod ranker;
pub mod seed;
pub mod tfidf;

pub use corpus::{load_corpus, make_descriptor_set, normalize_descriptor, CorpusError, DescriptorSet, Track};
pub use densevec::{EmbeddingMatrix, EmbeddingProvider, MockEmbedder, ProviderInfo, Scorer};
pub use eval::{evaluate, make_test_samples, EvalReport, TestCase, TestSet};
pub use gpl::{generate_triples, margin_label, mine_negatives, TrainingTriple};
pub use pairgen::{generate_pairs, RequestPair};
pub use ranker::{build_index, rank, DescriptorIndex, Encoder, Hit};
