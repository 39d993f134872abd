#ifndef ROBUSTBOND_H
#define ROBUSTBOND_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RbStatus {
  RB_STATUS_OK = 0,
  RB_STATUS_NULL_POINTER = 1,
  RB_STATUS_INVALID_ARGUMENT = 2,
  RB_STATUS_DIMENSION_MISMATCH = 3,
  RB_STATUS_DOMAIN_ERROR = 4,
  RB_STATUS_EMPTY_SET = 5,
  RB_STATUS_UNBOUNDED_SET = 6,
  RB_STATUS_UNSUPPORTED = 7,
  RB_STATUS_SOLVER_FAILURE = 8,
  RB_STATUS_INFEASIBLE = 9,
  RB_STATUS_PANIC = 10,
} RbStatus;

typedef enum RbCompounding {
  RB_COMPOUNDING_CONTINUOUS = 0,
  RB_COMPOUNDING_PERIODIC = 1,
} RbCompounding;

typedef enum RbAnalysis {
  RB_ANALYSIS_EXACT = 0,
  RB_ANALYSIS_LINEARIZED = 1,
} RbAnalysis;

typedef enum RbConstruction {
  // Dual program for boxes and polyhedra, cutting plane otherwise.
  RB_CONSTRUCTION_AUTO = 0,
  RB_CONSTRUCTION_DUAL = 1,
  RB_CONSTRUCTION_CUTTING_PLANE = 2,
} RbConstruction;

// Cash flows plus a nominal market state.
typedef struct RbModel RbModel;

// An uncertainty set over market states.
typedef struct RbSet RbSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call into the library on this thread.
const char *rb_last_error_message(void);

// Builds a model from an `n_bonds × n_periods` cash-flow matrix and a
// nominal state of `n_periods + n_bonds` rates per period.
//
// # Safety
// `flows` must hold `n_bonds * n_periods` values, `nominal` must hold
// `n_periods + n_bonds` values and `out` must be writable.
enum RbStatus rb_model_new(const double *flows,
                           size_t n_bonds,
                           size_t n_periods,
                           const double *nominal,
                           enum RbCompounding compounding,
                           struct RbModel **out);

// # Safety
// `model` must be null or a handle from [`rb_model_new`] not yet freed.
void rb_model_free(struct RbModel *model);

// Writes the nominal bond prices (`n_bonds` values).
//
// # Safety
// `model` must be a live handle and `prices` must have room for `n_bonds` values.
enum RbStatus rb_model_prices(const struct RbModel *model, double *prices);

// Gradient of `log V` at the nominal state: `n_periods` yield entries
// followed by `n_bonds` spread entries.
//
// # Safety
// `holdings_ptr` must hold `n_bonds` values and `gradient` must have room for
// `n_periods + n_bonds` values.
enum RbStatus rb_model_sensitivities(const struct RbModel *model,
                                     const double *holdings_ptr,
                                     double *gradient);

// A box `lower ≤ m ≤ upper`; both bounds hold `n_periods + n_bonds` values.
//
// # Safety
// `lower` and `upper` must hold `n_periods + n_bonds` values and `out` must be writable.
enum RbStatus rb_set_new_box(const double *lower,
                             const double *upper,
                             size_t n_periods,
                             size_t n_bonds,
                             struct RbSet **out);

// The set `{center + L z : ‖z‖² ≤ radius_sq}` with `L` of size `dim × rank`.
//
// # Safety
// `center` must hold `dim` values, `factor` must hold `dim * rank` values
// and `out` must be writable.
enum RbStatus rb_set_new_ellipsoid(const double *center,
                                   const double *factor,
                                   size_t dim,
                                   size_t rank,
                                   double radius_sq,
                                   struct RbSet **out);

// The polyhedron `{m : A m ≤ b}` with `A` of size `rows × dim`.
//
// # Safety
// `a` must hold `rows * dim` values, `b` must hold `rows` values and `out`
// must be writable.
enum RbStatus rb_set_new_polyhedral(const double *a,
                                    const double *b,
                                    size_t rows,
                                    size_t dim,
                                    struct RbSet **out);

// # Safety
// `set` must be null or a handle from one of the `rb_set_new_*` functions not yet freed.
void rb_set_free(struct RbSet *set);

// Worst-case change in log value of `holdings` over the set.
//
// `argmin` may be null; otherwise it receives `n_periods + n_bonds` values.
//
// # Safety
// Handles must be live, `holdings_ptr` must hold `n_bonds` values and
// `delta_out` must be writable.
enum RbStatus rb_worst_case(const struct RbModel *model,
                            const struct RbSet *set,
                            const double *holdings_ptr,
                            enum RbAnalysis method,
                            double *delta_out,
                            double *argmin);

// Robust holdings minimizing `½‖h − reference‖₁ − lambda·Δ^wc(h)`, with the
// budget fixed at the nominal value of `reference`.
//
// `holdings_out` receives `n_bonds` values and `worst_delta` (may be null)
// the exact worst case at the solution.
//
// # Safety
// Handles must be live, `reference` must hold `n_bonds` values and
// `holdings_out` must have room for `n_bonds` values.
enum RbStatus rb_construct(const struct RbModel *model,
                           const struct RbSet *set,
                           const double *reference,
                           double lambda,
                           enum RbConstruction method,
                           double *holdings_out,
                           double *worst_delta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUSTBOND_H */
