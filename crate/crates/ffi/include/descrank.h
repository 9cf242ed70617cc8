#ifndef DESCRANK_H
#define DESCRANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum DrStatus {
  DR_STATUS_OK = 0,
  DR_STATUS_NULL_ARGUMENT = 1,
  DR_STATUS_INVALID_UTF8 = 2,
  DR_STATUS_INVALID_ARGUMENT = 3,
  DR_STATUS_IO = 4,
  DR_STATUS_PARSE = 5,
  DR_STATUS_PROVIDER = 6,
  DR_STATUS_PANIC = 7,
} DrStatus;

/*
 Built-in encoders. Wire providers use [`dr_encoder_new_wire`].
 */
typedef enum DrEncoderKind {
  DR_ENCODER_KIND_TFIDF = 0,
  DR_ENCODER_KIND_MOCK = 1,
} DrEncoderKind;

/*
 Loaded corpus.
 */
typedef struct DrCorpus DrCorpus;

/*
 Encoder (tf-idf, mock or wire provider). Not thread-safe.
 */
typedef struct DrEncoder DrEncoder;

/*
 Ranked keys with scores.
 */
typedef struct DrHits DrHits;

/*
 Descriptor index over unique keys.
 */
typedef struct DrIndex DrIndex;

/*
 Evaluation summary.
 */
typedef struct DrEvalSummary {
  double mean;
  double std;
  size_t k;
  size_t n_samples;
  size_t n_requests;
  size_t n_unique_keys;
} DrEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer is
 valid until the next `dr_*` call on the same thread.
 */
const char *dr_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *dr_version(void);

/*
 # Safety
 `s` must be NULL or a string returned by this library, not yet freed.
 */
void dr_string_free(char *s);

/*
 Normalizes one descriptor (lowercase, NFC, whitespace collapsed).

 # Safety
 `raw` must be a NUL-terminated string; `out` must be writable.
 */
enum DrStatus dr_normalize_descriptor(const char *raw, char **out);

/*
 Canonical key of a raw descriptor list.

 # Safety
 `raw` must point to `n` NUL-terminated strings; `out` must be writable.
 */
enum DrStatus dr_descriptor_key(const char *const *raw, size_t n, char **out);

/*
 Writes the 64-dimensional mock embedding of `text` into `out`.

 # Safety
 `text` must be a NUL-terminated string; `out` must hold `len` floats.
 */
enum DrStatus dr_mock_embed(const char *text, float *out, size_t len);

/*
 Mock-teacher margin `score(request, pos) - score(request, neg)`.

 # Safety
 String arguments must be NUL-terminated; `out` must be writable.
 */
enum DrStatus dr_mock_margin(const char *request,
                             const char *positive_key,
                             const char *negative_key,
                             double *out);

/*
 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DrStatus dr_corpus_load(const char *path, struct DrCorpus **out);

/*
 Number of tracks, 0 for NULL.

 # Safety
 `corpus` must be NULL or a live handle.
 */
size_t dr_corpus_len(const struct DrCorpus *corpus);

/*
 # Safety
 `corpus` must be NULL or a handle not yet freed.
 */
void dr_corpus_free(struct DrCorpus *corpus);

/*
 # Safety
 `out` must be writable.
 */
enum DrStatus dr_encoder_new(enum DrEncoderKind kind, struct DrEncoder **out);

/*
 Connects to a wire provider (`tcp:HOST:PORT` or `stdio:COMMAND`).

 # Safety
 `addr` must be a NUL-terminated string; `out` must be writable.
 */
enum DrStatus dr_encoder_new_wire(const char *addr, struct DrEncoder **out);

/*
 # Safety
 `encoder` must be NULL or a handle not yet freed.
 */
void dr_encoder_free(struct DrEncoder *encoder);

/*
 Builds an index over `n` keys. Duplicates are merged and keys sorted.

 # Safety
 `keys` must point to `n` NUL-terminated strings; `encoder` must be a
 live handle; `out` must be writable.
 */
enum DrStatus dr_index_build(const char *const *keys,
                             size_t n,
                             struct DrEncoder *encoder,
                             struct DrIndex **out);

/*
 Loads an index saved by the CLI `index` command.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DrStatus dr_index_load(const char *path, struct DrIndex **out);

/*
 # Safety
 `index` must be a live handle; `path` a NUL-terminated string.
 */
enum DrStatus dr_index_save(const struct DrIndex *index, const char *path);

/*
 Number of unique keys, 0 for NULL.

 # Safety
 `index` must be NULL or a live handle.
 */
size_t dr_index_len(const struct DrIndex *index);

/*
 # Safety
 `index` must be NULL or a handle not yet freed.
 */
void dr_index_free(struct DrIndex *index);

/*
 Top `k` keys for `request`, best first; ties go to the smaller key.

 # Safety
 `index` and `encoder` must be live handles; `request` a NUL-terminated
 string; `out` writable.
 */
enum DrStatus dr_index_rank(const struct DrIndex *index,
                            struct DrEncoder *encoder,
                            const char *request,
                            size_t k,
                            struct DrHits **out);

/*
 # Safety
 `hits` must be NULL or a live handle.
 */
size_t dr_hits_len(const struct DrHits *hits);

/*
 Borrowed key at position `i`, NULL when out of range. Valid until the
 hits are freed.

 # Safety
 `hits` must be NULL or a live handle.
 */
const char *dr_hits_key(const struct DrHits *hits, size_t i);

/*
 Score at position `i`, NaN when out of range.

 # Safety
 `hits` must be NULL or a live handle.
 */
double dr_hits_score(const struct DrHits *hits, size_t i);

/*
 # Safety
 `hits` must be NULL or a handle not yet freed.
 */
void dr_hits_free(struct DrHits *hits);

/*
 Samples `n_samples` test sets from the corpus and reports Recall@k.

 # Safety
 `corpus` and `encoder` must be live handles; `out` writable.
 */
enum DrStatus dr_evaluate_corpus(const struct DrCorpus *corpus,
                                 struct DrEncoder *encoder,
                                 uint64_t seed,
                                 size_t n_samples,
                                 size_t k,
                                 struct DrEvalSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DESCRANK_H */
