#ifndef FIXHEAD_H
#define FIXHEAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Loss selector for [`fixhead_head_loss_and_grads`].
 */
typedef enum FixheadLoss {
  FIXHEAD_LOSS_CROSS_ENTROPY = 0,
  FIXHEAD_LOSS_COSINE_SUM = 1,
  FIXHEAD_LOSS_COSINE_MEAN = 2,
} FixheadLoss;

typedef enum FixheadStatus {
  FIXHEAD_STATUS_OK = 0,
  FIXHEAD_STATUS_NULL_POINTER = 1,
  FIXHEAD_STATUS_INVALID_ARGUMENT = 2,
  FIXHEAD_STATUS_DIMENSION = 3,
  FIXHEAD_STATUS_IO = 4,
  FIXHEAD_STATUS_FORMAT = 5,
  FIXHEAD_STATUS_NUMERICAL = 6,
  FIXHEAD_STATUS_PANIC = 7,
} FixheadStatus;

/**
 * Classifier head: learned, orthonormal or truncated Hadamard.
 */
typedef struct FixheadHead FixheadHead;

/**
 * Trained network restored from a checkpoint.
 */
typedef struct FixheadModel FixheadModel;

/**
 * Fixed `N x C` projection.
 */
typedef struct FixheadProjection FixheadProjection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a
 * successful one. The pointer stays valid until the next call into the
 * library from the same thread.
 */
const char *fixhead_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fixhead_version(void);

/**
 * In-place unnormalized Walsh-Hadamard transform; `len` must be a power
 * of two.
 *
 * # Safety
 * `data` must point to `len` writable doubles.
 */
enum FixheadStatus fixhead_fwht(double *data, uintptr_t len);

/**
 * Writes the `n x n` Sylvester Hadamard matrix (entries ±1).
 *
 * # Safety
 * `out` must point to `out_len` writable doubles.
 */
enum FixheadStatus fixhead_sylvester(uintptr_t n, double *out, uintptr_t out_len);

/**
 * Random projection with orthonormal columns; needs `n_classes <= n_features`.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum FixheadStatus fixhead_projection_orthonormal(uintptr_t n_features,
                                                  uintptr_t n_classes,
                                                  uint64_t seed,
                                                  struct FixheadProjection **out);

/**
 * Random projection with independent unit-norm columns; any `n_classes`.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum FixheadStatus fixhead_projection_unit_rows(uintptr_t n_features,
                                                uintptr_t n_classes,
                                                uint64_t seed,
                                                struct FixheadProjection **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid handle slot.
 */
enum FixheadStatus fixhead_projection_load(const char *path, struct FixheadProjection **out);

/**
 * # Safety
 * `projection` must come from this library; `path` must be NUL-terminated.
 */
enum FixheadStatus fixhead_projection_save(const struct FixheadProjection *projection,
                                           const char *path);

/**
 * # Safety
 * All pointers must be valid; the shape outputs may be NULL.
 */
enum FixheadStatus fixhead_projection_shape(const struct FixheadProjection *projection,
                                            uintptr_t *n_features,
                                            uintptr_t *n_classes);

/**
 * Copies the `n_features x n_classes` matrix into `out`.
 *
 * # Safety
 * `out` must point to `out_len` writable doubles.
 */
enum FixheadStatus fixhead_projection_data(const struct FixheadProjection *projection,
                                           double *out,
                                           uintptr_t out_len);

/**
 * # Safety
 * `projection` must come from this library and not be used afterwards.
 * NULL is accepted.
 */
void fixhead_projection_free(struct FixheadProjection *projection);

/**
 * Fixed head over a copy of `projection`, with trainable scale 1 and zero bias.
 *
 * # Safety
 * `projection` must come from this library; `out` a valid handle slot.
 */
enum FixheadStatus fixhead_head_orthonormal(const struct FixheadProjection *projection,
                                            struct FixheadHead **out);

/**
 * Truncated Hadamard head for `n_features` inputs and `n_classes` outputs.
 *
 * # Safety
 * `out` must be a valid handle slot.
 */
enum FixheadStatus fixhead_head_hadamard(uintptr_t n_features,
                                         uintptr_t n_classes,
                                         struct FixheadHead **out);

/**
 * Ordinary affine head with an `n_features x n_classes` weight matrix.
 *
 * # Safety
 * `weights` must point to `n_features * n_classes` doubles.
 */
enum FixheadStatus fixhead_head_learned(const double *weights,
                                        uintptr_t n_features,
                                        uintptr_t n_classes,
                                        struct FixheadHead **out);

/**
 * # Safety
 * `head` must come from this library.
 */
enum FixheadStatus fixhead_head_set_alpha(struct FixheadHead *head, double alpha);

/**
 * # Safety
 * `head` must come from this library; `alpha` must be writable.
 */
enum FixheadStatus fixhead_head_alpha(const struct FixheadHead *head, double *alpha);

/**
 * Logits for representation `x` (`x_len` = number of features) into
 * `out` (`out_len` = number of classes).
 *
 * # Safety
 * Buffers must hold the stated number of doubles.
 */
enum FixheadStatus fixhead_head_logits(const struct FixheadHead *head,
                                       const double *x,
                                       uintptr_t x_len,
                                       double *out,
                                       uintptr_t out_len);

/**
 * Loss at `(x, target)` and its gradients. `d_input` has `x_len` entries
 * and `d_bias` one per class. `d_alpha` and `d_bias` may be NULL; they are
 * zero for the cosine losses and for the learned head's scale.
 *
 * # Safety
 * Non-NULL buffers must hold the stated number of doubles.
 */
enum FixheadStatus fixhead_head_loss_and_grads(const struct FixheadHead *head,
                                               enum FixheadLoss loss_kind,
                                               const double *x,
                                               uintptr_t x_len,
                                               uintptr_t target,
                                               double *loss,
                                               double *d_input,
                                               double *d_alpha,
                                               double *d_bias);

/**
 * # Safety
 * `head` must come from this library and not be used afterwards. NULL is
 * accepted.
 */
void fixhead_head_free(struct FixheadHead *head);

/**
 * Restores a network written by `fixhead train`.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` a valid handle slot.
 */
enum FixheadStatus fixhead_model_load(const char *path, struct FixheadModel **out);

/**
 * # Safety
 * `model` must come from this library; the outputs may be NULL.
 */
enum FixheadStatus fixhead_model_shape(const struct FixheadModel *model,
                                       uintptr_t *input_dim,
                                       uintptr_t *n_classes);

/**
 * Logits for input `z` and, if `class_out` is non-NULL, the predicted class.
 *
 * # Safety
 * `z` must hold `z_len` doubles and `logits` `logits_len` writable doubles.
 */
enum FixheadStatus fixhead_model_predict(const struct FixheadModel *model,
                                         const double *z,
                                         uintptr_t z_len,
                                         double *logits,
                                         uintptr_t logits_len,
                                         uintptr_t *class_out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. NULL is
 * accepted.
 */
void fixhead_model_free(struct FixheadModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIXHEAD_H */
