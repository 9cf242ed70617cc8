//! C ABI for descrank.
//!
//! Objects cross the boundary as opaque handles created by `dr_*_new` /
//! `dr_*_load` / `dr_*_build` and released with the matching `dr_*_free`.
//! Every fallible call returns a [`DrStatus`]; on failure the message is
//! available from [`dr_last_error`] on the same thread. Strings returned
//! through `char **` out-parameters are owned by the caller and released
//! with [`dr_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use descrank::corpus::{load_corpus, make_descriptor_set, normalize_descriptor, CorpusError, Track};
use descrank::densevec::{mock_embed, CachedProvider, DenseError, MockEmbedder, MockScorer, WireClient, MOCK_DIM};
use descrank::eval::{evaluate, make_test_samples, EvalError};
use descrank::gpl::margin_label;
use descrank::ranker::{DescriptorIndex, Encoder, Hit, RankError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Provider = 6,
    Panic = 7,
}

/// Built-in encoders. Wire providers use [`dr_encoder_new_wire`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrEncoderKind {
    Tfidf = 0,
    Mock = 1,
}

/// Loaded corpus.
pub struct DrCorpus {
    tracks: Vec<Track>,
}

/// Encoder (tf-idf, mock or wire provider). Not thread-safe.
pub struct DrEncoder {
    inner: Encoder,
}

/// Descriptor index over unique keys.
pub struct DrIndex {
    inner: DescriptorIndex,
}

/// Ranked keys with scores.
pub struct DrHits {
    keys: Vec<CString>,
    scores: Vec<f64>,
}

/// Evaluation summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DrEvalSummary {
    pub mean: f64,
    pub std: f64,
    pub k: usize,
    pub n_samples: usize,
    pub n_requests: usize,
    pub n_unique_keys: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(DrStatus, String);

impl Failure {
    fn new(status: DrStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }

    /// Message built from `err` and its sources, joined with ": ".
    fn chain(status: DrStatus, err: &dyn std::error::Error) -> Self {
        let mut msg = err.to_string();
        let mut source = err.source();
        while let Some(e) = source {
            msg.push_str(": ");
            msg.push_str(&e.to_string());
            source = e.source();
        }
        Failure(status, msg)
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let status = match e {
            CorpusError::Io { .. } => DrStatus::Io,
            CorpusError::AllEmpty | CorpusError::ContainsSeparator(_) => DrStatus::InvalidArgument,
            _ => DrStatus::Parse,
        };
        Failure::chain(status, &e)
    }
}

impl From<DenseError> for Failure {
    fn from(e: DenseError) -> Self {
        Failure::chain(DrStatus::Provider, &e)
    }
}

impl From<RankError> for Failure {
    fn from(e: RankError) -> Self {
        let status = match e {
            RankError::Dense(_) => DrStatus::Provider,
            RankError::Io { .. } => DrStatus::Io,
            RankError::Format(_) | RankError::SparseFile(_) => DrStatus::Parse,
            _ => DrStatus::InvalidArgument,
        };
        Failure::chain(status, &e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Rank(r) => r.into(),
            other => Failure::chain(DrStatus::InvalidArgument, &other),
        }
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(DrStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(DrStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn str_array<'a>(p: *const *const c_char, n: usize, name: &str) -> Result<Vec<&'a str>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Failure::new(DrStatus::NullArgument, format!("{name} is NULL")));
    }
    std::slice::from_raw_parts(p, n)
        .iter()
        .enumerate()
        .map(|(i, s)| str_arg(*s, &format!("{name}[{i}]")))
        .collect()
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(DrStatus::NullArgument, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure::new(DrStatus::InvalidArgument, "string contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next `dr_*` call on the same thread.
#[no_mangle]
pub extern "C" fn dr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Normalizes one descriptor (lowercase, NFC, whitespace collapsed).
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_normalize_descriptor(raw: *const c_char, out: *mut *mut c_char) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let raw = str_arg(raw, "raw")?;
        write_string(out, normalize_descriptor(raw))
    })
}

/// Canonical key of a raw descriptor list.
///
/// # Safety
/// `raw` must point to `n` NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_descriptor_key(
    raw: *const *const c_char,
    n: usize,
    out: *mut *mut c_char,
) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let raw = str_array(raw, n, "raw")?;
        let set = make_descriptor_set(raw)?;
        write_string(out, set.key().to_owned())
    })
}

/// Writes the 64-dimensional mock embedding of `text` into `out`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn dr_mock_embed(text: *const c_char, out: *mut f32, len: usize) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        if len < MOCK_DIM {
            return Err(Failure::new(
                DrStatus::InvalidArgument,
                format!("output holds {len} floats, need {MOCK_DIM}"),
            ));
        }
        let v = mock_embed(text);
        std::slice::from_raw_parts_mut(out, MOCK_DIM).copy_from_slice(&v);
        Ok(())
    })
}

/// Mock-teacher margin `score(request, pos) - score(request, neg)`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_mock_margin(
    request: *const c_char,
    positive_key: *const c_char,
    negative_key: *const c_char,
    out: *mut f64,
) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let r = str_arg(request, "request")?;
        let p = str_arg(positive_key, "positive_key")?;
        let n = str_arg(negative_key, "negative_key")?;
        *out = margin_label(r, p, n, &mut MockScorer)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_corpus_load(path: *const c_char, out: *mut *mut DrCorpus) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let tracks = load_corpus(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(DrCorpus { tracks }));
        Ok(())
    })
}

/// Number of tracks, 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_corpus_len(corpus: *const DrCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.tracks.len())
}

/// # Safety
/// `corpus` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_corpus_free(corpus: *mut DrCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_encoder_new(kind: DrEncoderKind, out: *mut *mut DrEncoder) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let inner = match kind {
            DrEncoderKind::Tfidf => Encoder::TfIdf,
            DrEncoderKind::Mock => Encoder::dense(CachedProvider::new(MockEmbedder::new())),
        };
        *out = Box::into_raw(Box::new(DrEncoder { inner }));
        Ok(())
    })
}

/// Connects to a wire provider (`tcp:HOST:PORT` or `stdio:COMMAND`).
///
/// # Safety
/// `addr` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_encoder_new_wire(addr: *const c_char, out: *mut *mut DrEncoder) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let embedder = WireClient::connect(str_arg(addr, "addr")?)?.into_embedder()?;
        let inner = Encoder::dense(CachedProvider::new(embedder));
        *out = Box::into_raw(Box::new(DrEncoder { inner }));
        Ok(())
    })
}

/// # Safety
/// `encoder` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_encoder_free(encoder: *mut DrEncoder) {
    if !encoder.is_null() {
        drop(Box::from_raw(encoder));
    }
}

/// Builds an index over `n` keys. Duplicates are merged and keys sorted.
///
/// # Safety
/// `keys` must point to `n` NUL-terminated strings; `encoder` must be a
/// live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_index_build(
    keys: *const *const c_char,
    n: usize,
    encoder: *mut DrEncoder,
    out: *mut *mut DrIndex,
) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let encoder = encoder
            .as_mut()
            .ok_or_else(|| Failure::new(DrStatus::NullArgument, "encoder is NULL"))?;
        let mut keys: Vec<String> = str_array(keys, n, "keys")?.into_iter().map(str::to_owned).collect();
        keys.sort_unstable();
        keys.dedup();
        let inner = DescriptorIndex::from_keys(keys, &mut encoder.inner)?;
        *out = Box::into_raw(Box::new(DrIndex { inner }));
        Ok(())
    })
}

/// Loads an index saved by the CLI `index` command.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_index_load(path: *const c_char, out: *mut *mut DrIndex) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let inner = DescriptorIndex::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(DrIndex { inner }));
        Ok(())
    })
}

/// # Safety
/// `index` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dr_index_save(index: *const DrIndex, path: *const c_char) -> DrStatus {
    guard(|| {
        let index = index
            .as_ref()
            .ok_or_else(|| Failure::new(DrStatus::NullArgument, "index is NULL"))?;
        index.inner.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of unique keys, 0 for NULL.
///
/// # Safety
/// `index` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_index_len(index: *const DrIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.len())
}

/// # Safety
/// `index` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_index_free(index: *mut DrIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Top `k` keys for `request`, best first; ties go to the smaller key.
///
/// # Safety
/// `index` and `encoder` must be live handles; `request` a NUL-terminated
/// string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dr_index_rank(
    index: *const DrIndex,
    encoder: *mut DrEncoder,
    request: *const c_char,
    k: usize,
    out: *mut *mut DrHits,
) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let index = index
            .as_ref()
            .ok_or_else(|| Failure::new(DrStatus::NullArgument, "index is NULL"))?;
        let encoder = encoder
            .as_mut()
            .ok_or_else(|| Failure::new(DrStatus::NullArgument, "encoder is NULL"))?;
        let hits = index.inner.rank(str_arg(request, "request")?, k, &mut encoder.inner)?;
        let (mut keys, mut scores) = (Vec::with_capacity(hits.len()), Vec::with_capacity(hits.len()));
        for Hit { key, score } in hits {
            keys.push(CString::new(key).map_err(|_| Failure::new(DrStatus::InvalidArgument, "key contains NUL"))?);
            scores.push(score);
        }
        *out = Box::into_raw(Box::new(DrHits { keys, scores }));
        Ok(())
    })
}

/// # Safety
/// `hits` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_hits_len(hits: *const DrHits) -> usize {
    hits.as_ref().map_or(0, |h| h.keys.len())
}

/// Borrowed key at position `i`, NULL when out of range. Valid until the
/// hits are freed.
///
/// # Safety
/// `hits` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_hits_key(hits: *const DrHits, i: usize) -> *const c_char {
    hits.as_ref()
        .and_then(|h| h.keys.get(i))
        .map_or(ptr::null(), |k| k.as_ptr())
}

/// Score at position `i`, NaN when out of range.
///
/// # Safety
/// `hits` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_hits_score(hits: *const DrHits, i: usize) -> f64 {
    hits.as_ref()
        .and_then(|h| h.scores.get(i).copied())
        .unwrap_or(f64::NAN)
}

/// # Safety
/// `hits` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_hits_free(hits: *mut DrHits) {
    if !hits.is_null() {
        drop(Box::from_raw(hits));
    }
}

/// Samples `n_samples` test sets from the corpus and reports Recall@k.
///
/// # Safety
/// `corpus` and `encoder` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dr_evaluate_corpus(
    corpus: *const DrCorpus,
    encoder: *mut DrEncoder,
    seed: u64,
    n_samples: usize,
    k: usize,
    out: *mut DrEvalSummary,
) -> DrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let corpus = corpus
            .as_ref()
            .ok_or_else(|| Failure::new(DrStatus::NullArgument, "corpus is NULL"))?;
        let encoder = encoder
            .as_mut()
            .ok_or_else(|| Failure::new(DrStatus::NullArgument, "encoder is NULL"))?;
        let sets = make_test_samples(&corpus.tracks, n_samples, seed);
        let report = evaluate(&mut encoder.inner, &sets, k)?;
        *out = DrEvalSummary {
            mean: report.mean,
            std: report.std,
            k: report.k,
            n_samples: report.per_sample_recall.len(),
            n_requests: report.n_requests,
            n_unique_keys: report.n_unique_keys,
        };
        Ok(())
    })
}
