#ifndef SRMT_H
#define SRMT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Region-selection fusion for [`srmt_sensitive_mask`].
typedef enum SrmtFusion {
  SRMT_FUSION_MAX = 0,
  SRMT_FUSION_AVG = 1,
  SRMT_FUSION_BEST = 2,
} SrmtFusion;

// Result code of every fallible call.
typedef enum SrmtStatus {
  SRMT_STATUS_OK = 0,
  SRMT_STATUS_NULL_POINTER = 1,
  SRMT_STATUS_INVALID_UTF8 = 2,
  SRMT_STATUS_BUFFER_TOO_SMALL = 3,
  SRMT_STATUS_PANIC = 4,
  SRMT_STATUS_IO = 10,
  SRMT_STATUS_BAD_MAGIC = 11,
  SRMT_STATUS_UNSUPPORTED_VERSION = 12,
  SRMT_STATUS_SHAPE_CHAIN_BROKEN = 13,
  SRMT_STATUS_TRUNCATED_BLOB = 14,
  SRMT_STATUS_MALFORMED_DESCRIPTOR = 15,
  SRMT_STATUS_MODEL_HAS_NO_TARGET_LAYER = 16,
  SRMT_STATUS_DECODE_ERROR = 17,
  SRMT_STATUS_EMPTY_SEED_SET = 18,
  SRMT_STATUS_SHAPE_MISMATCH = 20,
  SRMT_STATUS_INVALID_CLASS = 21,
  SRMT_STATUS_INVALID_ARGUMENT = 22,
  SRMT_STATUS_EMPTY_HEATMAP_LIST = 23,
  SRMT_STATUS_RECT_LARGER_THAN_IMAGE = 24,
  SRMT_STATUS_RECT_OUT_OF_BOUNDS = 25,
  SRMT_STATUS_UNDEFINED_FOR_ZERO_TRIALS = 26,
  SRMT_STATUS_FEWER_THAN_TWO_BINS = 27,
  SRMT_STATUS_CONFIG = 28,
} SrmtStatus;

// Opaque model handle.
typedef struct SrmtModel SrmtModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Engine version as a static NUL-terminated string.
const char *srmt_version(void);

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *srmt_last_error_message(void);

// Loads an SRMTW model file. On success `*out` receives a handle that must
// be released with [`srmt_model_free`].
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be writable.
enum SrmtStatus srmt_model_load(const char *path, struct SrmtModel **out);

// Releases a handle from [`srmt_model_load`]. NULL is ignored.
//
// # Safety
// `model` must come from [`srmt_model_load`] and not have been freed.
void srmt_model_free(struct SrmtModel *model);

// Writes the input shape (channels, height, width) and class count.
//
// # Safety
// `model` must be a live handle; each out pointer must be writable.
enum SrmtStatus srmt_model_describe(const struct SrmtModel *model,
                                    size_t *out_channels,
                                    size_t *out_height,
                                    size_t *out_width,
                                    size_t *out_num_classes);

// Forward pass: writes `num_classes` pre-softmax logits to `out_logits` and
// the predicted class (lowest index on ties) to `out_best_class` if non-NULL.
//
// # Safety
// `image` must point to `image_len` floats; `out_logits` to `out_len` writable floats.
enum SrmtStatus srmt_model_logits(const struct SrmtModel *model,
                                  const float *image,
                                  size_t image_len,
                                  float *out_logits,
                                  size_t out_len,
                                  size_t *out_best_class);

// Grad-CAM heat map of `class` at input resolution (H×W values in [0,1]).
//
// # Safety
// As for [`srmt_model_logits`]; `out` must hold `out_len` floats.
enum SrmtStatus srmt_heatmap(const struct SrmtModel *model,
                             const float *image,
                             size_t image_len,
                             size_t class_,
                             float *out,
                             size_t out_len);

// Sensitive-region mask (H×W bytes, 1 = selected) for the given fusion and
// threshold; `out_count` receives the number of selected pixels if non-NULL.
//
// # Safety
// As for [`srmt_model_logits`]; `out` must hold `out_len` bytes.
enum SrmtStatus srmt_sensitive_mask(const struct SrmtModel *model,
                                    const float *image,
                                    size_t image_len,
                                    enum SrmtFusion fusion,
                                    float threshold,
                                    uint8_t *out,
                                    size_t out_len,
                                    size_t *out_count);

// False detection rate `negatives / (positives + negatives)`.
// Fails with `UndefinedForZeroTrials` when both counts are zero.
//
// # Safety
// `out` must be writable.
enum SrmtStatus srmt_fdr(uint64_t positives, uint64_t negatives, double *out);

// Runs the campaign described by the JSON config at `config_path` with
// `jobs` worker threads (0 = all processors) and writes `report.json`,
// `trials.csv` and `bins.csv` into `out_dir` (NULL = the config's out_dir).
// `out_gate_tripped`, if non-NULL, is set to 1 when a method's FDR exceeds
// the configured fail threshold.
//
// # Safety
// Strings must be valid NUL-terminated UTF-8; `out_gate_tripped` writable or NULL.
enum SrmtStatus srmt_campaign_run(const char *config_path,
                                  const char *out_dir,
                                  size_t jobs,
                                  uint8_t *out_gate_tripped);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SRMT_H */
