#ifndef PREREC_H
#define PREREC_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every fallible call.
typedef enum PrerecStatus {
  PREREC_STATUS_OK = 0,
  PREREC_STATUS_NULL_ARGUMENT = 1,
  PREREC_STATUS_INVALID_UTF8 = 2,
  PREREC_STATUS_IO_ERROR = 3,
  PREREC_STATUS_DATA_ERROR = 4,
  PREREC_STATUS_CONFIG_ERROR = 5,
  PREREC_STATUS_NUMERIC_ERROR = 6,
} PrerecStatus;

// A loaded model checkpoint.
typedef struct PrerecCheckpoint PrerecCheckpoint;

// A loaded domain: catalog, embeddings, interactions, interval counts.
typedef struct PrerecDomain PrerecDomain;

// A ranked catalog slice with scores.
typedef struct PrerecRanking PrerecRanking;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *prerec_version(void);

// Copies the last error message into `buf` (truncated to `cap - 1` bytes,
// always NUL-terminated when `cap > 0`). Returns the full message length.
//
// # Safety
// `buf` must point to at least `cap` writable bytes (or be null).
size_t prerec_last_error(char *buf, size_t cap);

// Loads a checkpoint archive from `path`.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum PrerecStatus prerec_checkpoint_load(const char *path, struct PrerecCheckpoint **out);

// # Safety
// `handle` must come from [`prerec_checkpoint_load`] and not be freed twice.
void prerec_checkpoint_free(struct PrerecCheckpoint *handle);

// Loads one domain from an interactions file (`format`: 0 = CSV,
// 1 = JSONL), a JSONL catalog, and an embedding manifest. Interval counts
// use `interval_secs` (pass 0 for the 15-day default).
//
// # Safety
// All pointer arguments must be valid; strings NUL-terminated.
enum PrerecStatus prerec_domain_load(const char *interactions_path,
                                     uint32_t format,
                                     const char *catalog_path,
                                     const char *embeddings_manifest_path,
                                     const char *domain_id,
                                     int64_t interval_secs,
                                     struct PrerecDomain **out);

// # Safety
// `handle` must come from [`prerec_domain_load`] and not be freed twice.
void prerec_domain_free(struct PrerecDomain *handle);

// Number of catalog items in the domain.
//
// # Safety
// `domain` must be a live handle.
size_t prerec_domain_items(const struct PrerecDomain *domain);

// Ranks the domain catalog zero-shot for a user history at time `time`,
// keeping the top `k_pct` percent. History ids unknown to the catalog are
// skipped.
//
// # Safety
// `history_ids` must point to `history_len` valid NUL-terminated strings;
// handles must be live; `out` must be a valid pointer.
enum PrerecStatus prerec_zero_shot_rank(const struct PrerecCheckpoint *checkpoint,
                                        const struct PrerecDomain *domain,
                                        const char *const *history_ids,
                                        size_t history_len,
                                        int64_t time,
                                        double k_pct,
                                        struct PrerecRanking **out);

// Number of entries in a ranking.
//
// # Safety
// `ranking` must be a live handle.
size_t prerec_ranking_len(const struct PrerecRanking *ranking);

// Copies the item id at `index` (0-based; rank = index + 1) into `buf`,
// NUL-terminated. Returns the full id length, or 0 on a bad index.
//
// # Safety
// `ranking` must be a live handle; `buf` must hold `cap` writable bytes.
size_t prerec_ranking_item(const struct PrerecRanking *ranking,
                           size_t index,
                           char *buf,
                           size_t cap);

// Score at `index`; NaN on a bad index.
//
// # Safety
// `ranking` must be a live handle.
double prerec_ranking_score(const struct PrerecRanking *ranking, size_t index);

// # Safety
// `handle` must come from [`prerec_zero_shot_rank`] and not be freed twice.
void prerec_ranking_free(struct PrerecRanking *handle);

// Catalog-normalized NDCG at a 1-based rank (no truncation).
double prerec_r_ndcg(uint64_t rank, double a, double b, uint64_t n_items);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PREREC_H */
