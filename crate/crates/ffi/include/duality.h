#ifndef DUALITY_H
#define DUALITY_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum DualityStatus {
  DUALITY_STATUS_OK = 0,
  DUALITY_STATUS_NULL_POINTER = 1,
  DUALITY_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The JSON text or its UTF-8 encoding is malformed.
   */
  DUALITY_STATUS_PARSE = 3,
  /**
   * The scenario parsed but violates the tree invariants.
   */
  DUALITY_STATUS_VALIDATION = 4,
  /**
   * The market admits no strictly positive deflator.
   */
  DUALITY_STATUS_NO_DEFLATOR = 5,
  DUALITY_STATUS_SOLVER = 6,
  DUALITY_STATUS_BUFFER_TOO_SMALL = 7,
  DUALITY_STATUS_PANIC = 8,
} DualityStatus;

/**
 * Opaque handle to a validated scenario (tree plus utility field).
 */
typedef struct DualityModel DualityModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL after a success.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *duality_last_error(void);

/**
 * Parses and validates a scenario document. On success `*out` owns a new model.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum DualityStatus duality_model_from_json(const char *json, struct DualityModel **out);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from [`duality_model_from_json`] and not be freed twice.
 */
void duality_model_free(struct DualityModel *model);

/**
 * Number of nodes in the tree; node buffers must hold this many doubles.
 *
 * # Safety
 * `m` must be a live model and `out` writable.
 */
enum DualityStatus duality_model_node_count(const struct DualityModel *m, size_t *out);

/**
 * Writes whether a strictly positive deflator exists and the margin `eps_star`.
 * Either output may be NULL.
 *
 * # Safety
 * `m` must be a live model; non-NULL outputs must be writable.
 */
enum DualityStatus duality_check_nupbr(const struct DualityModel *m, bool *holds, double *eps_star);

/**
 * Maximises expected utility from initial capital `x`. Writes `u(x)` and, when
 * `consumption` is not NULL, the optimal plan (one value per node, BFS order).
 *
 * # Safety
 * `m` must be a live model; `consumption` must hold `len` doubles.
 */
enum DualityStatus duality_solve_primal(const struct DualityModel *m,
                                        double x,
                                        double tol,
                                        double *value,
                                        double *consumption,
                                        size_t len);

/**
 * Minimises the dual problem at `y`. Writes `v(y)` and, when `process` is not
 * NULL, the optimal dual process `Y`; nodes without clock mass get NaN.
 *
 * # Safety
 * `m` must be a live model; `process` must hold `len` doubles.
 */
enum DualityStatus duality_solve_dual(const struct DualityModel *m,
                                      double y,
                                      double tol,
                                      double *value,
                                      double *process,
                                      size_t len);

/**
 * Monte Carlo estimate of `E[1/R_t]` for a 3-d Bessel process from 1, with its
 * standard error. Reproducible for a given `seed`.
 *
 * # Safety
 * Non-NULL outputs must be writable.
 */
enum DualityStatus duality_bessel_defect(double t,
                                         uint64_t paths,
                                         uint64_t seed,
                                         double *estimate,
                                         double *std_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALITY_H */
