#ifndef EMODISTILL_H
#define EMODISTILL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EmdStatus {
  EMD_STATUS_OK = 0,
  EMD_STATUS_NULL_POINTER = 1,
  EMD_STATUS_INVALID_ARGUMENT = 2,
  EMD_STATUS_IO = 3,
  EMD_STATUS_FORMAT = 4,
  EMD_STATUS_DATA = 5,
  EMD_STATUS_NUMERICAL = 6,
  EMD_STATUS_CONFIG = 7,
  EMD_STATUS_PANIC = 8,
} EmdStatus;

// Opaque trained model.
typedef struct EmdModel EmdModel;

// Opaque per-dimension residual regression.
typedef struct EmdResidualModel EmdResidualModel;

// Concordance statistics of one prediction/label pair.
typedef struct EmdCccStats {
  double ccc;
  double rho;
  double c_b;
  double mean_pred;
  double mean_label;
  double var_pred;
  double var_label;
  double cov;
} EmdCccStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread; empty after a
// success. The pointer stays valid until the next library call on this thread.
const char *emd_last_error(void);

// Library version as a static NUL-terminated string.
const char *emd_version(void);

// CCC, Pearson correlation and bias correction of `n` predictions against
// `n` labels.
//
// # Safety
// `pred` and `label` must each point to `n` floats; `out` must be writable.
enum EmdStatus emd_ccc_stats(const float *pred,
                             const float *label,
                             size_t n,
                             struct EmdCccStats *out);

// Loads a checkpoint. On success `*out` owns a new handle.
//
// # Safety
// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
enum EmdStatus emd_model_load(const char *path, struct EmdModel **out);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must come from [`emd_model_load`] and not be used afterwards.
void emd_model_free(struct EmdModel *model);

// Writes the feature widths and embedding size; `text_dim` is 0 for
// audio-only models. Any output pointer may be null.
//
// # Safety
// `model` must be a live handle; non-null outputs must be writable.
enum EmdStatus emd_model_dims(const struct EmdModel *model,
                              size_t *audio_dim,
                              size_t *text_dim,
                              size_t *embed_dim);

// Predicts `[activation, valence, dominance]` into `out[0..3]`.
//
// `audio` holds `audio_frames × audio_dim` row-major floats. `text` holds
// `text_tokens × text_dim` floats and is ignored by audio-only models.
//
// # Safety
// `model` must be a live handle; buffers must match the stated sizes;
// `out` must have room for 3 floats.
enum EmdStatus emd_model_predict(const struct EmdModel *model,
                                 const float *audio,
                                 size_t audio_frames,
                                 const float *text,
                                 size_t text_tokens,
                                 float *out);

// Writes the utterance embedding into `out[0..out_len]`; `out_len` must
// equal the model's embedding size.
//
// # Safety
// As for [`emd_model_predict`], with `out` valid for `out_len` writes.
enum EmdStatus emd_model_embed(const struct EmdModel *model,
                               const float *audio,
                               size_t audio_frames,
                               const float *text,
                               size_t text_tokens,
                               float *out,
                               size_t out_len);

// Fits the per-dimension regression from `n` teacher predictions to `n`
// labels (both `n × 3` row-major).
//
// # Safety
// `preds` and `labels` must each hold `3 * n` floats; `out` must be writable.
enum EmdStatus emd_residual_fit(const float *preds,
                                const float *labels,
                                size_t n,
                                struct EmdResidualModel **out);

// Copies slope, intercept and residual standard deviation per dimension.
// Any output pointer may be null.
//
// # Safety
// `model` must be a live handle; non-null outputs must hold 3 doubles.
enum EmdStatus emd_residual_params(const struct EmdResidualModel *model,
                                   double *w,
                                   double *b,
                                   double *sigma);

// Gate decision for `n` utterances: `keep[i]` is 1 when no dimension's
// residual exceeds `tau` standard deviations, else 0.
//
// # Safety
// `preds` and `labels` must hold `3 * n` floats; `keep` must hold `n` bytes.
enum EmdStatus emd_residual_keep(const struct EmdResidualModel *model,
                                 const float *preds,
                                 const float *labels,
                                 size_t n,
                                 double tau,
                                 uint8_t *keep);

// Releases a residual model. Null is ignored.
//
// # Safety
// `model` must come from [`emd_residual_fit`] and not be used afterwards.
void emd_residual_free(struct EmdResidualModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMODISTILL_H */
