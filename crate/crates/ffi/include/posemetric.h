#ifndef POSEMETRIC_H
#define POSEMETRIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  PM_STATUS_OK = 0,
  PM_STATUS_NULL_POINTER = 1,
  PM_STATUS_INVALID_ARGUMENT = 2,
  PM_STATUS_IO = 3,
  PM_STATUS_FORMAT = 4,
  PM_STATUS_DIMENSION = 5,
  PM_STATUS_UNKNOWN_METRIC = 6,
  PM_STATUS_NUMERIC = 7,
  PM_STATUS_PANIC = 8,
} PmStatus;

/**
 * Opaque handle to a loaded bundle.
 */
typedef struct PmModel PmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads the bundle directory at `bundle_dir` and stores a new handle in `*out`.
 *
 * # Safety
 * `bundle_dir` must be a NUL-terminated string and `out` a writable pointer.
 */
PmStatus pm_model_load(const char *bundle_dir, PmModel **out);

/**
 * Releases a handle from `pm_model_load`. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void pm_model_free(PmModel *model);

/**
 * Number of joints, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t pm_model_joint_count(const PmModel *model);

/**
 * Latent dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t pm_model_latent_dim(const PmModel *model);

/**
 * Angle in radians between two 3-vectors.
 *
 * # Safety
 * `u` and `v` must point to 3 doubles; `out` must be writable.
 */
PmStatus pm_vector_angle(const double *u, const double *v, double *out);

/**
 * Evaluates a registered metric on a pose.
 *
 * # Safety
 * Pointers must be valid for the given lengths; `metric` NUL-terminated.
 */
PmStatus pm_model_evaluate_metric(const PmModel *model,
                                  const char *metric,
                                  const double *pose,
                                  size_t pose_len,
                                  double *out);

/**
 * # Safety
 * Pointers must be valid for the given lengths.
 */
PmStatus pm_model_encode(const PmModel *model,
                         const double *pose,
                         size_t pose_len,
                         float *latent,
                         size_t latent_len);

/**
 * # Safety
 * Pointers must be valid for the given lengths.
 */
PmStatus pm_model_decode(const PmModel *model,
                         const float *latent,
                         size_t latent_len,
                         double *pose,
                         size_t pose_len);

/**
 * Edits one pose toward `target_count` metric targets, averaging the modules.
 *
 * # Safety
 * `metrics` must hold `target_count` NUL-terminated strings and `values`
 * `target_count` doubles; pose buffers must be valid for their lengths.
 */
PmStatus pm_model_edit_pose(const PmModel *model,
                            const char *const *metrics,
                            const double *values,
                            size_t target_count,
                            const double *pose,
                            size_t pose_len,
                            double *out,
                            size_t out_len);

/**
 * Edits `frame_count` consecutive poses, blending each frame by `weights[t]` in `[0, 1]`.
 *
 * # Safety
 * `frames` and `out` must hold `frame_count * 3 * joint_count` doubles and
 * `weights` `frame_count` doubles; target arrays as in `pm_model_edit_pose`.
 */
PmStatus pm_model_edit_clip(const PmModel *model,
                            const char *const *metrics,
                            const double *values,
                            size_t target_count,
                            const double *frames,
                            size_t frame_count,
                            const double *weights,
                            double *out);

/**
 * Writes the hat weight curve for `frames` frames peaking at `peak` into `out`.
 *
 * # Safety
 * `out` must hold `frames` doubles.
 */
PmStatus pm_hat_curve(size_t frames, size_t peak, size_t radius, double *out);

/**
 * Message for the most recent failure on this thread; empty if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *pm_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSEMETRIC_H */
