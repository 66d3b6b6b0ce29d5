#ifndef PERMTEST_H
#define PERMTEST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum PtStatus {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_POINTER = 1,
  PT_STATUS_INVALID_INPUT = 2,
  PT_STATUS_DIMENSION_MISMATCH = 3,
  PT_STATUS_NON_FINITE = 4,
  PT_STATUS_INVALID_GROUP = 5,
  PT_STATUS_TOO_LARGE = 6,
  PT_STATUS_X_IN_SPAN_Z = 7,
  PT_STATUS_NO_SOLUTION = 8,
  PT_STATUS_PANIC = 9,
} PtStatus;

/**
 * Opaque permutation group: an explicit element list or a block product.
 */
typedef struct PtGroup PtGroup;

/**
 * PALMRT statistics. For block groups the `phi` fields are Monte Carlo
 * estimates from `m_samples` draws and `k_plus_1` equals `m_samples`.
 */
typedef struct PtPalmrtResult {
  double phi;
  double phi_tie;
  double phi1;
  double phi2;
  bool reject;
  size_t k_plus_1;
} PtPalmrtResult;

typedef struct PtCptResult {
  double r0;
  double threshold;
  double delta;
  bool reject;
  size_t k_plus_1;
} PtCptResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pt_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pt_version(void);

/**
 * The `n` cyclic shifts of `0..n`.
 */
enum PtStatus pt_group_full_cycle(size_t n, struct PtGroup **out);

/**
 * `k_plus_1` rotations of contiguous blocks; trailing indices stay fixed.
 */
enum PtStatus pt_group_left_shift(size_t n, size_t k_plus_1, struct PtGroup **out);

/**
 * Explicit group from `count` permutations stored back to back in `images`
 * (`count * n` entries). Closure is verified.
 *
 * # Safety
 * `images` must point to `count * n` readable values.
 */
enum PtStatus pt_group_from_perms(size_t n,
                                  size_t count,
                                  const size_t *images,
                                  struct PtGroup **out);

/**
 * Block-product group; `labels[i]` names the block of index `i`.
 *
 * # Safety
 * `labels` must point to `n` readable values.
 */
enum PtStatus pt_group_from_labels(size_t n, const size_t *labels, struct PtGroup **out);

/**
 * Design-adaptive block group for `(x, z)`. `random_mode` selects random
 * binning instead of the contract partition.
 *
 * # Safety
 * `x` must hold `n` values and `z` `n * p` values.
 */
enum PtStatus pt_group_optimized(const double *x,
                                 const double *z,
                                 size_t n,
                                 size_t p,
                                 bool random_mode,
                                 uint64_t seed,
                                 struct PtGroup **out);

/**
 * Number of indices the group acts on; 0 for NULL.
 *
 * # Safety
 * `g` must be NULL or a live handle.
 */
size_t pt_group_n(const struct PtGroup *g);

/**
 * Group order, saturating at `UINT64_MAX`; 0 for NULL.
 *
 * # Safety
 * `g` must be NULL or a live handle.
 */
uint64_t pt_group_order(const struct PtGroup *g);

/**
 * Releases a handle; NULL is ignored.
 *
 * # Safety
 * `g` must be NULL or a handle not yet freed.
 */
void pt_group_free(struct PtGroup *g);

/**
 * PALMRT on an explicit group, or its sampled version on a block group.
 *
 * # Safety
 * `x`, `y` must hold `n` values, `z` `n * p` values; `group` must be live.
 */
enum PtStatus pt_palmrt(const double *x,
                        const double *z,
                        const double *y,
                        size_t n,
                        size_t p,
                        const struct PtGroup *group,
                        double alpha,
                        bool two_sided,
                        bool half_ties,
                        size_t m_samples,
                        uint64_t seed,
                        struct PtPalmrtResult *out);

/**
 * Weighted PALMRT; `t_out` receives the weighted statistic.
 *
 * # Safety
 * As [`pt_palmrt`]; block groups are enumerated.
 */
enum PtStatus pt_weighted_palmrt(const double *x,
                                 const double *z,
                                 const double *y,
                                 size_t n,
                                 size_t p,
                                 const struct PtGroup *group,
                                 double alpha,
                                 double w0,
                                 double *t_out,
                                 struct PtPalmrtResult *out);

/**
 * Conformal permutation test with the power-optimized direction. `w0 <= 0`
 * selects uniform weights. If `eta_out` is not NULL it receives `n` values.
 *
 * # Safety
 * As [`pt_palmrt`]; `eta_out` must be NULL or hold `n` writable values.
 */
enum PtStatus pt_cpt(const double *x,
                     const double *z,
                     const double *y,
                     size_t n,
                     size_t p,
                     const struct PtGroup *group,
                     double alpha,
                     double w0,
                     double *eta_out,
                     struct PtCptResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERMTEST_H */
