#ifndef SHARE_H
#define SHARE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ShareStatus {
  SHARE_STATUS_OK = 0,
  SHARE_STATUS_NULL_POINTER = 1,
  SHARE_STATUS_INVALID_UTF8 = 2,
  SHARE_STATUS_IO = 3,
  SHARE_STATUS_BAD_CHECKPOINT = 4,
  SHARE_STATUS_UNKNOWN_ITEM = 5,
  SHARE_STATUS_OUT_OF_RANGE = 6,
  SHARE_STATUS_INVALID_ARGUMENT = 7,
  SHARE_STATUS_BUFFER_TOO_SMALL = 8,
  SHARE_STATUS_NUMERICAL = 9,
  SHARE_STATUS_PANIC = 10,
} ShareStatus;

/**
 * A loaded model with its vocabulary.
 */
typedef struct ShareModel ShareModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *share_version(void);

/**
 * Message for the last failure on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *share_last_error(void);

/**
 * Loads a checkpoint file into a new handle written to `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ShareStatus share_model_load(const char *path, struct ShareModel **out);

/**
 * Releases a handle. Null is accepted.
 *
 * # Safety
 * `model` must come from [`share_model_load`] and not be freed twice.
 */
void share_model_free(struct ShareModel *model);

/**
 * Number of items in the model's vocabulary (0 for a null handle).
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t share_model_num_items(const struct ShareModel *model);

/**
 * Embedding dimension (0 for a null handle).
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t share_model_embed_dim(const struct ShareModel *model);

/**
 * Looks up the index of an item key.
 *
 * # Safety
 * `model` must be a live handle, `key` NUL-terminated, `out_index` valid.
 */
enum ShareStatus share_model_index_of(const struct ShareModel *model,
                                      const char *key,
                                      uintptr_t *out_index);

/**
 * Copies the key of item `index` into `buf` with a trailing NUL. The key
 * length without the NUL is always written to `*out_len` (when non-null),
 * so a call with `buf_len = 0` sizes the buffer.
 *
 * # Safety
 * `buf` must hold `buf_len` bytes (or be null when `buf_len` is 0).
 */
enum ShareStatus share_model_item_key(const struct ShareModel *model,
                                      uintptr_t index,
                                      char *buf,
                                      uintptr_t buf_len,
                                      uintptr_t *out_len);

/**
 * Ranks all items for the session `items[0..len]` (indices, click order)
 * and writes the best `k` to `out_items`/`out_scores`, which must hold
 * `k` entries. `*out_count` receives `min(k, num_items)`.
 *
 * # Safety
 * All pointers must be valid for the stated lengths.
 */
enum ShareStatus share_model_predict_topk(const struct ShareModel *model,
                                          const uintptr_t *items,
                                          uintptr_t len,
                                          uintptr_t k,
                                          uintptr_t *out_items,
                                          double *out_scores,
                                          uintptr_t *out_count);

/**
 * Writes the logit of every item for the session into `out_scores`, which
 * must hold `out_len >= num_items` entries.
 *
 * # Safety
 * All pointers must be valid for the stated lengths.
 */
enum ShareStatus share_model_scores(const struct ShareModel *model,
                                    const uintptr_t *items,
                                    uintptr_t len,
                                    double *out_scores,
                                    uintptr_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHARE_H */
