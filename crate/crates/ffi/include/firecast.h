#ifndef FIRECAST_H
#define FIRECAST_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Side of the square maps a model consumes and emits.
#define FC_MAP_SIDE 32

// Number of input feature channels.
#define FC_FEATURES 12

typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_ARGUMENT = 2,
  FC_STATUS_DIMENSION = 3,
  FC_STATUS_FORMAT = 4,
  FC_STATUS_IO = 5,
  FC_STATUS_DIGEST_MISMATCH = 6,
  FC_STATUS_UNDEFINED_METRIC = 7,
  FC_STATUS_NON_FINITE = 8,
  FC_STATUS_BUFFER_TOO_SMALL = 9,
  FC_STATUS_PANIC = 10,
} FcStatus;

// Opaque WFD1 dataset.
typedef struct FcDataset FcDataset;

// Opaque segmentation model.
typedef struct FcModel FcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *fc_last_error(void);

// Library version as a static NUL-terminated string.
const char *fc_version(void);

// Loads a WFD1 container from `path`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum FcStatus fc_dataset_load(const char *path, struct FcDataset **out);

// Generates a synthetic container.
//
// # Safety
// `out` must be a valid pointer.
enum FcStatus fc_dataset_synthesize(size_t count,
                                    size_t height,
                                    size_t width,
                                    uint64_t seed,
                                    bool separable,
                                    struct FcDataset **out);

// Number of samples, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t fc_dataset_len(const struct FcDataset *ds);

// # Safety
// `ds` must be null or a handle not yet freed.
void fc_dataset_free(struct FcDataset *ds);

// Builds an untrained desk-scale model. `family` is one of `autoencoder`,
// `resnet`, `unet`, `swin`; `width` is a multiplier such as `1/4`, or null
// for the family default.
//
// # Safety
// String arguments must be NUL-terminated (`width` may be null); `out` must
// be a valid pointer.
enum FcStatus fc_model_build(const char *family,
                             const char *width,
                             uint64_t seed,
                             struct FcModel **out);

// Loads a PYC1 checkpoint together with its `<checkpoint>.json` model card.
//
// # Safety
// `checkpoint` must be NUL-terminated and `out` a valid pointer.
enum FcStatus fc_model_load(const char *checkpoint, struct FcModel **out);

// # Safety
// `m` must be null or a handle not yet freed.
void fc_model_free(struct FcModel *m);

// # Safety
// `m` must be a live model handle and `out` a valid pointer.
enum FcStatus fc_model_param_count(const struct FcModel *m, uint64_t *out);

// FLOPs of one forward pass on a single `12×32×32` input.
//
// # Safety
// `m` must be a live model handle and `out` a valid pointer.
enum FcStatus fc_model_flops(const struct FcModel *m, uint64_t *out);

// Fire probabilities for `n` normalized inputs laid out `n×12×32×32`;
// writes `n×32×32` values.
//
// # Safety
// `inputs` must hold `n·12·32·32` floats and `out` `out_len` floats.
enum FcStatus fc_model_predict(const struct FcModel *m,
                               const float *inputs,
                               size_t n,
                               float *out,
                               size_t out_len);

// Integrated gradients of the summed logits for the centered, normalized
// `32×32` crop of sample `sample_id`. Writes `12×32×32` attributions, 12
// positive contribution ratios and the completeness gap.
//
// # Safety
// Handles must be live; `attributions` must hold `attributions_len` floats,
// `pcr` 12 doubles, and `gap` may be null.
enum FcStatus fc_integrated_gradients(const struct FcModel *m,
                                      const struct FcDataset *ds,
                                      size_t sample_id,
                                      size_t steps,
                                      float *attributions,
                                      size_t attributions_len,
                                      double *pcr,
                                      double *gap);

// ROC-AUC over pixels whose label is not −1.
//
// # Safety
// `probs` and `labels` must hold `n` floats; `out` must be valid.
enum FcStatus fc_roc_auc(const float *probs, const float *labels, size_t n, double *out);

// Average precision over pixels whose label is not −1.
//
// # Safety
// `probs` and `labels` must hold `n` floats; `out` must be valid.
enum FcStatus fc_pr_auc(const float *probs, const float *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIRECAST_H */
