#ifndef ROBUST_PROXY_H
#define ROBUST_PROXY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `RP_OK` is zero; everything else is an error.
 */
typedef enum RpStatus {
  RP_OK = 0,
  RP_NULL_POINTER = 1,
  RP_INVALID_UTF8 = 2,
  RP_IO = 3,
  RP_PARSE = 4,
  RP_SHAPE = 5,
  RP_CONFIG = 6,
  RP_UNSUPPORTED = 7,
  RP_NUMERICAL = 8,
  RP_BUFFER_TOO_SMALL = 9,
  RP_PANIC = 10,
} RpStatus;

/**
 * Opaque handle to a loaded proxy model.
 */
typedef struct RpModel RpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rp_version(void);

/**
 * Message for the last failed call on this thread, empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *rp_last_error_message(void);

/**
 * Loads a checkpoint JSON file. On success `*out` owns a new handle that
 * must be released with [`rp_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RpStatus rp_model_load(const char *path, struct RpModel **out);

/**
 * Releases a handle from [`rp_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must come from [`rp_model_load`] and not be used afterwards.
 */
void rp_model_free(struct RpModel *model);

/**
 * Feature width expected by the network, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t rp_model_input_dim(const struct RpModel *model);

/**
 * Decision width produced by the network, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t rp_model_output_dim(const struct RpModel *model);

/**
 * Deployed (test-mode) decision for one instance. `*written` receives the
 * decision length even when the buffer is too small.
 *
 * # Safety
 * `instance_json` must be NUL-terminated; `out` must hold `out_len` doubles;
 * `written` may be null.
 */
enum RpStatus rp_model_predict_json(const struct RpModel *model,
                                    const char *instance_json,
                                    double *out,
                                    size_t out_len,
                                    size_t *written);

/**
 * Worst-case feasibility of a decision for one instance.
 *
 * # Safety
 * `instance_json` must be NUL-terminated, `decision` must hold `len`
 * doubles, and the output pointers must be valid.
 */
enum RpStatus rp_instance_feasibility(const char *instance_json,
                                      const double *decision,
                                      size_t len,
                                      double *max_violation,
                                      bool *feasible);

/**
 * Robust optimum from the reference solver (box sets only).
 *
 * # Safety
 * `instance_json` must be NUL-terminated; `out` must hold `out_len`
 * doubles; `written` may be null; `f_star` must be valid.
 */
enum RpStatus rp_instance_solve(const char *instance_json,
                                double *out,
                                size_t out_len,
                                size_t *written,
                                double *f_star);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUST_PROXY_H */
