#ifndef ISSUELOC_H
#define ISSUELOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IlStatus {
  IL_STATUS_OK = 0,
  IL_STATUS_NULL_ARGUMENT = 1,
  IL_STATUS_INVALID_UTF8 = 2,
  IL_STATUS_IO = 3,
  IL_STATUS_FORMAT = 4,
  IL_STATUS_INVALID_INPUT = 5,
  IL_STATUS_NUMERIC = 6,
  IL_STATUS_INTEGRITY = 7,
  IL_STATUS_PROVIDER = 8,
  IL_STATUS_CONFIG = 9,
  IL_STATUS_BUFFER_TOO_SMALL = 10,
  IL_STATUS_PANIC = 11,
} IlStatus;

/**
 * A loaded vector index.
 */
typedef struct IlIndex IlIndex;

/**
 * Retrieval result: unit ids with scores, best first.
 */
typedef struct IlRankedList IlRankedList;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, statically allocated.
 */
const char *il_version(void);

/**
 * Message of the last failure on this thread, or null. Do not free.
 */
const char *il_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void il_string_free(char *s);

/**
 * Opens an index file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum IlStatus il_index_open(const char *path, struct IlIndex **out);

/**
 * # Safety
 * `index` must come from [`il_index_open`] and not have been freed.
 */
void il_index_free(struct IlIndex *index);

/**
 * # Safety
 * `index` must be a live handle; `out` must be writable.
 */
enum IlStatus il_index_len(const struct IlIndex *index, size_t *out);

/**
 * # Safety
 * `index` must be a live handle; `out` must be writable.
 */
enum IlStatus il_index_dimension(const struct IlIndex *index, size_t *out);

/**
 * Top `top_k` units by cosine against `query` (normalized here).
 *
 * # Safety
 * `query` must point to `dimension` floats; `out` must be writable.
 */
enum IlStatus il_index_retrieve(const struct IlIndex *index,
                                const float *query,
                                size_t dimension,
                                size_t top_k,
                                struct IlRankedList **out);

/**
 * # Safety
 * `list` must be a live handle.
 */
size_t il_ranked_list_len(const struct IlRankedList *list);

/**
 * Entry `i`. The id pointer stays valid until the list is freed.
 *
 * # Safety
 * `list` must be a live handle; out pointers must be writable.
 */
enum IlStatus il_ranked_list_get(const struct IlRankedList *list,
                                 size_t i,
                                 const char **unit_id,
                                 double *score);

/**
 * # Safety
 * `list` must come from this library and not have been freed.
 */
void il_ranked_list_free(struct IlRankedList *list);

/**
 * Deterministic feature-hashing embedding into `out[0..dimension]`.
 *
 * # Safety
 * `text` must be nul-terminated; `out` must hold `dimension` floats.
 */
enum IlStatus il_hash_embed(const char *text, size_t dimension, uint64_t seed, float *out);

/**
 * InfoNCE over `n` queries, each with one positive and `m` negatives, all
 * row-major with `dim` columns: `queries` and `positives` are `n*dim`,
 * `negatives` is `n*m*dim`. Gradient outputs may be null; when given they
 * have the matching input's length.
 *
 * # Safety
 * All non-null pointers must cover the lengths above.
 */
enum IlStatus il_info_nce(const double *queries,
                          const double *positives,
                          const double *negatives,
                          size_t n,
                          size_t m,
                          size_t dim,
                          double temperature,
                          double *loss,
                          double *grad_queries,
                          double *grad_positives,
                          double *grad_negatives);

/**
 * Cross-entropy of the first generated identifier; `target` is 1-based.
 *
 * # Safety
 * `logits` must point to `n` doubles; `out` must be writable.
 */
enum IlStatus il_first_token_loss(const double *logits, size_t n, size_t target, double *out);

/**
 * Repairs model output into a permutation of `1..=window_len`, written to
 * `out`, which must hold at least `window_len` entries.
 *
 * # Safety
 * `text` must be nul-terminated; `out` must hold `out_len` entries.
 */
enum IlStatus il_parse_permutation(const char *text,
                                   size_t window_len,
                                   size_t *out,
                                   size_t out_len);

/**
 * Unigram overlap of `a` against `b`. Any out pointer may be null.
 *
 * # Safety
 * Strings must be nul-terminated; non-null outs must be writable.
 */
enum IlStatus il_rouge1(const char *a,
                        const char *b,
                        double *precision,
                        double *recall,
                        double *f1);

/**
 * Extracts the `.py` function inventory of a checkout as a JSON array.
 * Free the result with [`il_string_free`].
 *
 * # Safety
 * Strings must be nul-terminated; `out_json` must be writable.
 */
enum IlStatus il_extract_units_json(const char *root,
                                    const char *repo_id,
                                    const char *commit_ref,
                                    char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISSUELOC_H */
