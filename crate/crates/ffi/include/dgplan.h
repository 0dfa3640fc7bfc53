#ifndef DGPLAN_H
#define DGPLAN_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DgplanStatus {
  DGPLAN_STATUS_OK = 0,
  DGPLAN_STATUS_NULL_POINTER = 1,
  DGPLAN_STATUS_INVALID_ARGUMENT = 2,
  DGPLAN_STATUS_PARSE_ERROR = 3,
  DGPLAN_STATUS_NON_CONVERGENCE = 4,
  DGPLAN_STATUS_NOT_RADIAL = 5,
  DGPLAN_STATUS_INVALID_DG = 6,
  DGPLAN_STATUS_BUFFER_TOO_SMALL = 7,
  DGPLAN_STATUS_PANIC = 99,
} DgplanStatus;

/**
 * Opaque feeder model.
 */
typedef struct DgplanCase DgplanCase;

/**
 * Opaque power-flow result.
 */
typedef struct DgplanSolution DgplanSolution;

/**
 * Score of a fixed DG configuration against the no-DG base case.
 */
typedef struct DgplanEvaluation {
  double base_loss_mw;
  double loss_mw;
  double loss_reduction_pct;
  double voltage_deviation;
  double v_min;
  size_t v_min_bus;
  bool within_band;
} DgplanEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next `dgplan_*` call on the same thread.
 */
const char *dgplan_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dgplan_version(void);

/**
 * Loads a built-in feeder (`"ieee33"`, `"ieee33bw"`, optionally prefixed
 * with `"builtin:"`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DgplanStatus dgplan_case_builtin(const char *name, struct DgplanCase **out);

/**
 * Parses a MATPOWER-style case from text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DgplanStatus dgplan_case_parse(const char *text, struct DgplanCase **out);

/**
 * # Safety
 * `case` must come from a `dgplan_case_*` constructor and not be freed yet.
 * Null is ignored.
 */
void dgplan_case_free(struct DgplanCase *case_);

/**
 * # Safety
 * `case` must be a live handle and `out` a valid pointer.
 */
enum DgplanStatus dgplan_case_bus_count(const struct DgplanCase *case_, size_t *out);

/**
 * New case with `count` DG units added as active injections.
 *
 * # Safety
 * `case` must be a live handle, `buses` and `mw` must each hold `count`
 * elements (they may be null when `count` is 0) and `out` must be valid.
 */
enum DgplanStatus dgplan_case_with_dg(const struct DgplanCase *case_,
                                      const size_t *buses,
                                      const double *mw,
                                      size_t count,
                                      struct DgplanCase **out);

/**
 * Solves the power flow. `tol <= 0` or `max_iter == 0` select the defaults
 * (1e-8, 50).
 *
 * # Safety
 * `case` must be a live handle and `out` a valid pointer.
 */
enum DgplanStatus dgplan_solve(const struct DgplanCase *case_,
                               double tol,
                               size_t max_iter,
                               struct DgplanSolution **out);

/**
 * # Safety
 * `sol` must come from [`dgplan_solve`] and not be freed yet. Null is
 * ignored.
 */
void dgplan_solution_free(struct DgplanSolution *sol);

/**
 * Total active (MW) and reactive (MVar) loss.
 *
 * # Safety
 * `sol` must be a live handle; `p_mw` and `q_mvar` must be valid pointers.
 */
enum DgplanStatus dgplan_solution_losses(const struct DgplanSolution *sol,
                                         double *p_mw,
                                         double *q_mvar);

/**
 * Lowest voltage magnitude (p.u.) and its external bus id.
 *
 * # Safety
 * `sol` must be a live handle; `v` and `bus` must be valid pointers.
 */
enum DgplanStatus dgplan_solution_min_voltage(const struct DgplanSolution *sol,
                                              double *v,
                                              size_t *bus);

/**
 * Copies voltage magnitudes (case bus order) into `buf`. `len` is the
 * buffer capacity; the bus count is always written to `written`.
 *
 * # Safety
 * `sol` must be a live handle, `buf` must hold `len` doubles and
 * `written` must be a valid pointer.
 */
enum DgplanStatus dgplan_solution_voltages(const struct DgplanSolution *sol,
                                           double *buf,
                                           size_t len,
                                           size_t *written);

/**
 * Scores `count` DG units against the case's own no-DG base case, using a
 * uniform `[v_min, v_max]` band for `within_band`.
 *
 * # Safety
 * `case` must be a live handle, `buses` and `mw` must each hold `count`
 * elements (null allowed when `count` is 0) and `out` must be valid.
 */
enum DgplanStatus dgplan_evaluate(const struct DgplanCase *case_,
                                  const size_t *buses,
                                  const double *mw,
                                  size_t count,
                                  double v_min,
                                  double v_max,
                                  struct DgplanEvaluation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DGPLAN_H */
