#ifndef HCOH_H
#define HCOH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result codes returned by every fallible call.
typedef enum HcohStatus {
  HCOH_STATUS_OK = 0,
  HCOH_STATUS_NULL_POINTER = 1,
  HCOH_STATUS_INVALID_ARGUMENT = 2,
  HCOH_STATUS_DIMENSION_MISMATCH = 3,
  HCOH_STATUS_CODEBOOK_EXHAUSTED = 4,
  HCOH_STATUS_NUMERIC_FAILURE = 5,
  HCOH_STATUS_IO = 6,
  HCOH_STATUS_FORMAT = 7,
  HCOH_STATUS_PANIC = 8,
} HcohStatus;

// Opaque set of packed binary codes with labels.
typedef struct HcohCodeSet HcohCodeSet;

// Opaque online hasher: model, codebook and reducer.
typedef struct HcohHasher HcohHasher;

// Retrieval metrics. `map_at_k` is NaN when no cutoff was requested.
typedef struct HcohEvalSummary {
  double map;
  double map_at_k;
  double precision_at_k;
  size_t n_queries;
  size_t n_database;
  size_t skipped_queries;
} HcohEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null if none.
// The pointer stays valid until the next failing call on the same thread.
const char *hcoh_last_error_message(void);

// Static description of a status code.
const char *hcoh_status_string(enum HcohStatus status);

// Number of 64-bit words used to store one code of `bits` bits.
size_t hcoh_words_per_code(size_t bits);

// Hamming distance between two packed codes of `bits` bits.
//
// # Safety
// `a` and `b` must each point to `hcoh_words_per_code(bits)` words.
uint32_t hcoh_hamming(const uint64_t *a, const uint64_t *b, size_t bits);

// Creates a fresh hasher. All random state is derived from `seed`.
// `sigmoid_gradient` selects the `(1 - h) h` gradient factor instead of the
// tanh derivative.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum HcohStatus hcoh_hasher_new(size_t feature_dim,
                                size_t bits,
                                double eta,
                                size_t max_labels,
                                uint64_t seed,
                                bool sigmoid_gradient,
                                struct HcohHasher **out);

// Releases a hasher. Null is ignored.
//
// # Safety
// `h` must come from this library and not be used afterwards.
void hcoh_hasher_free(struct HcohHasher *h);

// Loads a hasher from a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string, `out` writable.
enum HcohStatus hcoh_hasher_load(const char *path, struct HcohHasher **out);

// Writes a checkpoint atomically.
//
// # Safety
// `h` must be a live handle and `path` a NUL-terminated string.
enum HcohStatus hcoh_hasher_save(const struct HcohHasher *h, const char *path);

// One SGD step on a batch of `n` row-major instances.
//
// # Safety
// `features` must hold `n * feature_dim` values and `labels` `n` values.
enum HcohStatus hcoh_hasher_train(struct HcohHasher *h,
                                  const double *features,
                                  const uint32_t *labels,
                                  size_t n);

// Encodes `n` row-major instances into `out_words`, which must have room
// for `n * hcoh_words_per_code(bits)` words (`out_len`).
//
// # Safety
// Pointers must be valid for the stated lengths.
enum HcohStatus hcoh_hasher_encode(const struct HcohHasher *h,
                                   const double *features,
                                   size_t n,
                                   uint64_t *out_words,
                                   size_t out_len);

// Encodes `n` labelled instances into a new code set handle.
//
// # Safety
// Pointers must be valid for the stated lengths; `out` writable.
enum HcohStatus hcoh_hasher_encode_set(const struct HcohHasher *h,
                                       const double *features,
                                       const uint32_t *labels,
                                       size_t n,
                                       struct HcohCodeSet **out);

// # Safety
// `h` must be a live handle.
size_t hcoh_hasher_feature_dim(const struct HcohHasher *h);

// # Safety
// `h` must be a live handle.
size_t hcoh_hasher_bits(const struct HcohHasher *h);

// Number of SGD steps taken so far.
//
// # Safety
// `h` must be a live handle.
uint64_t hcoh_hasher_round(const struct HcohHasher *h);

// Order of the Hadamard codebook backing the targets.
//
// # Safety
// `h` must be a live handle.
size_t hcoh_hasher_codeword_order(const struct HcohHasher *h);

// Builds a code set from packed words (`n * hcoh_words_per_code(bits)`)
// and `n` labels. Padding bits past `bits` must be zero.
//
// # Safety
// Pointers must be valid for the stated lengths; `out` writable.
enum HcohStatus hcoh_codeset_new(size_t bits,
                                 const uint64_t *words,
                                 const uint32_t *labels,
                                 size_t n,
                                 struct HcohCodeSet **out);

// # Safety
// `path` must be a NUL-terminated string, `out` writable.
enum HcohStatus hcoh_codeset_read(const char *path, struct HcohCodeSet **out);

// # Safety
// `set` must be a live handle and `path` a NUL-terminated string.
enum HcohStatus hcoh_codeset_write(const struct HcohCodeSet *set, const char *path);

// # Safety
// `set` must be a live handle.
size_t hcoh_codeset_len(const struct HcohCodeSet *set);

// # Safety
// `set` must be a live handle.
size_t hcoh_codeset_bits(const struct HcohCodeSet *set);

// Pointer to the packed words of code `i`, or null when out of range.
// Valid while the set is alive.
//
// # Safety
// `set` must be a live handle.
const uint64_t *hcoh_codeset_code(const struct HcohCodeSet *set, size_t i);

// Releases a code set. Null is ignored.
//
// # Safety
// `set` must come from this library and not be used afterwards.
void hcoh_codeset_free(struct HcohCodeSet *set);

// Hamming-ranking evaluation of `queries` against `database`.
// `k_map == 0` means no mAP cutoff.
//
// # Safety
// Handles must be live; `out` writable.
enum HcohStatus hcoh_evaluate(const struct HcohCodeSet *queries,
                              const struct HcohCodeSet *database,
                              size_t k_prec,
                              size_t k_map,
                              struct HcohEvalSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HCOH_H */
