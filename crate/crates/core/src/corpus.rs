//! Corpus ingestion and descriptor canonicalization.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Joins normalized descriptors into a canonical key.
pub const KEY_SEPARATOR: &str = ", ";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("every descriptor is empty after normalization")]
    AllEmpty,
    #[error("descriptor {0:?} contains the key separator \", \"")]
    ContainsSeparator(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate track id {id:?}")]
    DuplicateId { path: PathBuf, line: usize, id: String },
    #[error("{path}:{line}: track {id:?} has no non-empty descriptors")]
    EmptyDescriptors { path: PathBuf, line: usize, id: String },
    #[error("{path}:{line}: track {id:?}: descriptor {descriptor:?} contains the key separator \", \"")]
    SeparatorInDescriptor {
        path: PathBuf,
        line: usize,
        id: String,
        descriptor: String,
    },
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercases, applies NFC, trims and collapses internal whitespace runs.
pub fn normalize_descriptor(raw: &str) -> String {
    let lowered: String = raw.nfc().collect::<String>().to_lowercase();
    // Lowercasing can denormalize a handful of code points.
    let nfc: String = lowered.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A normalized, deduplicated, bytewise-sorted descriptor list and its key.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DescriptorSet {
    // `key` first so the derived ordering is key order.
    key: String,
    items: Vec<String>,
}

impl DescriptorSet {
    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Splits a canonical key back into a set. Fails if the key is not
    /// already canonical.
    pub fn from_key(key: &str) -> Result<Self, CorpusError> {
        let set = make_descriptor_set(key.split(KEY_SEPARATOR))?;
        if set.key != key {
            return Err(CorpusError::ContainsSeparator(key.to_string()));
        }
        Ok(set)
    }

    /// Builds a set from a subset of already-normalized items.
    pub(crate) fn from_normalized<'a>(items: impl IntoIterator<Item = &'a String>) -> Self {
        let mut items: Vec<String> = items.into_iter().cloned().collect();
        items.sort_unstable();
        items.dedup();
        let key = items.join(KEY_SEPARATOR);
        DescriptorSet { key, items }
    }
}

impl fmt::Debug for DescriptorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DescriptorSet({:?})", self.key)
    }
}

impl fmt::Display for DescriptorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

impl Serialize for DescriptorSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.items.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DescriptorSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(deserializer)?;
        make_descriptor_set(raw.iter()).map_err(serde::de::Error::custom)
    }
}

/// Canonicalizes a raw descriptor list. Input order has no effect.
pub fn make_descriptor_set<I, S>(raw: I) -> Result<DescriptorSet, CorpusError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut items = Vec::new();
    for r in raw {
        let n = normalize_descriptor(r.as_ref());
        if n.is_empty() {
            continue;
        }
        if n.contains(KEY_SEPARATOR) {
            return Err(CorpusError::ContainsSeparator(n));
        }
        items.push(n);
    }
    if items.is_empty() {
        return Err(CorpusError::AllEmpty);
    }
    Ok(DescriptorSet::from_normalized(items.iter()))
}

/// One catalog item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Track {
    pub id: String,
    pub caption: String,
    pub descriptors: Vec<String>,
    set: DescriptorSet,
}

impl Track {
    pub fn new(
        id: impl Into<String>,
        caption: impl Into<String>,
        descriptors: Vec<String>,
    ) -> Result<Self, CorpusError> {
        let set = make_descriptor_set(&descriptors)?;
        Ok(Track {
            id: id.into(),
            caption: caption.into(),
            descriptors,
            set,
        })
    }

    /// The canonical set of this track's descriptors.
    pub fn descriptor_set(&self) -> &DescriptorSet {
        &self.set
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackRecord {
    id: String,
    caption: String,
    descriptors: Vec<String>,
}

impl Serialize for Track {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TrackRecord {
            id: self.id.clone(),
            caption: self.caption.clone(),
            descriptors: self.descriptors.clone(),
        }
        .serialize(serializer)
    }
}

/// Parses a JSON-lines corpus. Blank lines are skipped; line numbers are
/// 1-based.
pub fn parse_corpus<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Track>, CorpusError> {
    let mut tracks = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrackRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        if rec.id.is_empty() {
            return Err(CorpusError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: "empty track id".into(),
            });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                line: lineno,
                id: rec.id,
            });
        }
        let track = Track::new(rec.id.clone(), rec.caption, rec.descriptors).map_err(|e| match e {
            CorpusError::ContainsSeparator(descriptor) => CorpusError::SeparatorInDescriptor {
                path: path.to_path_buf(),
                line: lineno,
                id: rec.id.clone(),
                descriptor,
            },
            _ => CorpusError::EmptyDescriptors {
                path: path.to_path_buf(),
                line: lineno,
                id: rec.id.clone(),
            },
        })?;
        tracks.push(track);
    }
    Ok(tracks)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Track>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(BufReader::new(file), path)
}
