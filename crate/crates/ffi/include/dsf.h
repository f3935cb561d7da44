#ifndef DSF_H
#define DSF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DsfStatus {
  DSF_STATUS_OK = 0,
  DSF_STATUS_NULL_POINTER = 1,
  DSF_STATUS_INVALID_ARGUMENT = 2,
  DSF_STATUS_DIMENSION_MISMATCH = 3,
  DSF_STATUS_SEARCH_EXHAUSTED = 4,
  /**
   * Records completed before the budget ran out are still returned.
   */
  DSF_STATUS_BUDGET_EXHAUSTED = 5,
  DSF_STATUS_OUT_OF_RANGE = 6,
  DSF_STATUS_INTERNAL = 7,
  DSF_STATUS_PANIC = 8,
} DsfStatus;

/**
 * A percolation field: dimension, open probability and seed.
 */
typedef struct DsfField DsfField;

/**
 * A path of successive successor vertices.
 */
typedef struct DsfPath DsfPath;

/**
 * Regeneration records of one joint run.
 */
typedef struct DsfRegenerations DsfRegenerations;

typedef struct DsfRegeneration {
  uint64_t index;
  uint64_t tau_steps;
  int64_t t_time;
  uint64_t width;
} DsfRegeneration;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *dsf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dsf_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DsfStatus dsf_field_new(size_t d, double p, uint64_t seed, struct DsfField **out);

/**
 * # Safety
 * `field` must come from [`dsf_field_new`] and not be freed already. Null is ignored.
 */
void dsf_field_free(struct DsfField *field);

/**
 * Dimension of the field, or 0 for a null handle.
 *
 * # Safety
 * `field` must be null or a live handle.
 */
size_t dsf_field_dim(const struct DsfField *field);

/**
 * # Safety
 * `coords` must point to `len` readable values; `out` must be writable.
 */
enum DsfStatus dsf_field_uniform(const struct DsfField *field,
                                 const int64_t *coords_ptr,
                                 size_t len,
                                 double *out);

/**
 * # Safety
 * As for [`dsf_field_uniform`].
 */
enum DsfStatus dsf_field_is_open(const struct DsfField *field,
                                 const int64_t *coords_ptr,
                                 size_t len,
                                 bool *out);

/**
 * Successor of a vertex. Writes its `d` coordinates to `out` and the L1
 * length of the jump to `out_radius` (which may be null).
 *
 * # Safety
 * `coords` must hold `len` values and `out` must have room for `out_len`.
 */
enum DsfStatus dsf_successor(const struct DsfField *field,
                             const int64_t *coords_ptr,
                             size_t len,
                             int64_t *out,
                             size_t out_len,
                             uint64_t *out_radius);

/**
 * Follows `steps` successor jumps from a vertex.
 *
 * # Safety
 * `coords` must hold `len` values; `out` must be writable.
 */
enum DsfStatus dsf_path_new(const struct DsfField *field,
                            const int64_t *coords_ptr,
                            size_t len,
                            size_t steps,
                            struct DsfPath **out);

/**
 * # Safety
 * `path` must come from [`dsf_path_new`]. Null is ignored.
 */
void dsf_path_free(struct DsfPath *path);

/**
 * Number of vertices on the path including its start; 0 for null.
 *
 * # Safety
 * `path` must be null or a live handle.
 */
size_t dsf_path_len(const struct DsfPath *path);

/**
 * # Safety
 * `path` must be a live handle and `out` must have room for `out_len` values.
 */
enum DsfStatus dsf_path_vertex(const struct DsfPath *path,
                               size_t index,
                               int64_t *out,
                               size_t out_len);

/**
 * L1 length of jump `index`, from vertex `index` to vertex `index + 1`.
 *
 * # Safety
 * `path` must be a live handle; `out` must be writable.
 */
enum DsfStatus dsf_path_radius(const struct DsfPath *path, size_t index, uint64_t *out);

/**
 * Runs walkers from `n_walkers` starts (row-major, `d` coordinates each)
 * until `j_max` regenerations. On [`DsfStatus::BudgetExhausted`] the handle
 * is still written and holds the completed records.
 *
 * # Safety
 * `starts` must hold `n_walkers * d` values; `out` must be writable.
 */
enum DsfStatus dsf_regenerations_run(const struct DsfField *field,
                                     const int64_t *starts,
                                     size_t n_walkers,
                                     uint64_t j_max,
                                     uint64_t step_cap,
                                     struct DsfRegenerations **out);

/**
 * # Safety
 * `regs` must be null or a live handle.
 */
size_t dsf_regenerations_len(const struct DsfRegenerations *regs);

/**
 * # Safety
 * `regs` must be a live handle; `out` must be writable.
 */
enum DsfStatus dsf_regenerations_get(const struct DsfRegenerations *regs,
                                     size_t index,
                                     struct DsfRegeneration *out);

/**
 * # Safety
 * `regs` must come from [`dsf_regenerations_run`]. Null is ignored.
 */
void dsf_regenerations_free(struct DsfRegenerations *regs);

/**
 * Smallest threshold whose comparison walk drifts downward.
 *
 * # Safety
 * `out` must be writable.
 */
enum DsfStatus dsf_minimal_l0(double p, uint64_t *out);

/**
 * Probability that one step of the comparison walk equals `k`.
 *
 * # Safety
 * `out` must be writable.
 */
enum DsfStatus dsf_z_walk_pmf(double p, uint64_t l0, int64_t k, double *out);

/**
 * Mean step of the comparison walk.
 *
 * # Safety
 * `out` must be writable.
 */
enum DsfStatus dsf_z_walk_drift(double p, uint64_t l0, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSF_H */
