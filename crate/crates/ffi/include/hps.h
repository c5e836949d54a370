#ifndef HPS_H
#define HPS_H

#pragma once

#include <stddef.h>
#include <stdint.h>

/**
 * Status codes returned by every function.
 */
typedef enum HpsStatus {
  HPS_STATUS_OK = 0,
  HPS_STATUS_NULL_POINTER = 1,
  HPS_STATUS_INVALID_ARGUMENT = 2,
  HPS_STATUS_DOMAIN = 3,
  HPS_STATUS_ELLIPTICITY = 4,
  HPS_STATUS_NON_FINITE_COEFFICIENT = 5,
  HPS_STATUS_RESONANT_LEAF = 6,
  HPS_STATUS_RESONANT_MERGE = 7,
  HPS_STATUS_UNDECOMPOSABLE_LAYOUT = 8,
  HPS_STATUS_INCONSISTENT_CHILDREN = 9,
  HPS_STATUS_DIMENSION_MISMATCH = 10,
  HPS_STATUS_SINGULAR_SYSTEM = 11,
  HPS_STATUS_PROBE_NOT_ON_MESH = 12,
  HPS_STATUS_INSUFFICIENT_POINTS = 13,
  HPS_STATUS_FORMAT = 14,
  HPS_STATUS_IO = 15,
  HPS_STATUS_NOT_PRECOMPUTED = 16,
  HPS_STATUS_PANIC = 17,
} HpsStatus;

/**
 * Opaque solver handle.
 */
typedef struct HpsSolver HpsSolver;

/**
 * Leaf layout: `nx × ny` square cells of side `h` with lower-left corner at
 * `(origin_x, origin_y)`. `mask` holds `nx·ny` bytes, cell `(cx, cy)` at
 * `cx + nx·cy`, nonzero meaning present; a null `mask` selects all cells.
 */
typedef struct HpsLayout {
  size_t p;
  size_t nx;
  size_t ny;
  const uint8_t *mask;
  double h;
  double origin_x;
  double origin_y;
} HpsLayout;

/**
 * Scalar field callback `b(x₁, x₂)`. It may be called from several threads
 * at once.
 */
typedef double (*HpsField)(double x1, double x2, void *user_data);

/**
 * The operator `−Δu − s ∂₂u − κ²(1 − b(x)) u`, with `b ≡ 0` when
 * `potential` is null.
 */
typedef struct HpsOperator {
  double kappa;
  double convection;
  HpsField potential;
  void *potential_data;
  /**
   * Lower bound on reciprocal condition estimates; values ≤ 0 select the default.
   */
  double rcond_min;
  /**
   * Nonzero keeps only the derivative rows later merges need.
   */
  uint8_t restrict_rows;
} HpsOperator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a solver for `layout` and `op`. On success `*out` receives a
 * handle to release with `hps_solver_free`.
 *
 * # Safety
 * `layout` and `op` must point to valid structs; `layout.mask`, when not
 * null, must hold `nx·ny` bytes; `out` must be writable.
 */
enum HpsStatus hps_solver_new(const struct HpsLayout *layout,
                              const struct HpsOperator *op,
                              struct HpsSolver **out);

/**
 * Builds all solution operators. Calling it again rebuilds them.
 *
 * # Safety
 * `solver` must be a handle from `hps_solver_new` or `hps_solver_load`.
 */
enum HpsStatus hps_solver_precompute(struct HpsSolver *solver);

/**
 * Number of mesh nodes `N`, or 0 for a null handle.
 *
 * # Safety
 * `solver` must be null or a valid handle.
 */
size_t hps_solver_node_count(const struct HpsSolver *solver);

/**
 * Number of boundary nodes, or 0 for a null handle.
 *
 * # Safety
 * `solver` must be null or a valid handle.
 */
size_t hps_solver_boundary_count(const struct HpsSolver *solver);

/**
 * Writes node coordinates as `x₁, x₂` pairs into `xy` (length `2N`).
 *
 * # Safety
 * `xy` must hold `len` doubles.
 */
enum HpsStatus hps_solver_coordinates(const struct HpsSolver *solver, double *xy, size_t len);

/**
 * Writes the global indices of the boundary nodes, in the order boundary
 * data is expected.
 *
 * # Safety
 * `indices` must hold `len` entries.
 */
enum HpsStatus hps_solver_boundary_indices(const struct HpsSolver *solver,
                                           size_t *indices,
                                           size_t len);

/**
 * Solves with boundary data `f` (one value per boundary node). Writes `u`
 * at all `N` nodes; `v` and `w`, if not null, receive `∂₁u` and `∂₂u` at the
 * boundary nodes.
 *
 * # Safety
 * `f` must hold `f_len` doubles, `u` `u_len` doubles, and `v`/`w` (if not
 * null) `f_len` doubles each.
 */
enum HpsStatus hps_solver_solve(const struct HpsSolver *solver,
                                const double *f,
                                size_t f_len,
                                double *u,
                                size_t u_len,
                                double *v,
                                double *w);

/**
 * Smallest reciprocal condition estimate over all nodes, or NaN before
 * pre-computation.
 *
 * # Safety
 * `solver` must be null or a valid handle.
 */
double hps_solver_min_rcond(const struct HpsSolver *solver);

/**
 * Writes the pre-computed operators to `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum HpsStatus hps_solver_save(const struct HpsSolver *solver, const char *path);

/**
 * Loads operators written by `hps_solver_save`. The returned handle can
 * solve immediately; it has no operator, so `hps_solver_precompute` fails
 * on it.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum HpsStatus hps_solver_load(const char *path, struct HpsSolver **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `solver` must be null or a handle not yet freed.
 */
void hps_solver_free(struct HpsSolver *solver);

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *hps_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hps_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HPS_H */
