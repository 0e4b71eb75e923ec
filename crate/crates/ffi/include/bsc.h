#ifndef BSC_H
#define BSC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum BscStatus {
  BSC_STATUS_OK = 0,
  BSC_STATUS_INVALID_INPUT = 1,
  BSC_STATUS_INVALID_STATE = 2,
  /**
   * No density level yields the requested number of clusters.
   */
  BSC_STATUS_NO_VALID_LEVEL = 3,
  BSC_STATUS_UNSUPPORTED_DIMENSION = 4,
  BSC_STATUS_IO = 5,
  BSC_STATUS_FORMAT = 6,
  BSC_STATUS_NULL_POINTER = 7,
  /**
   * An internal panic was caught at the boundary.
   */
  BSC_STATUS_PANIC = 8,
} BscStatus;

/**
 * Opaque clustering result.
 */
typedef struct BscClusterResult BscClusterResult;

/**
 * Opaque fitted density forest.
 */
typedef struct BscForest BscForest;

/**
 * Split rule: 0 = pure random, 1 = adaptive.
 */
typedef struct BscForestParams {
  size_t m;
  size_t k;
  size_t p;
  uint32_t mode;
  double holdout_fraction;
  uint64_t seed;
} BscForestParams;

typedef struct BscClusterParams {
  size_t m;
  double r_ratio;
  double q;
  size_t k;
  size_t k_n;
  size_t k_c;
  double q_eps;
  uint32_t mode;
  double holdout_fraction;
  uint64_t seed;
} BscClusterParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into this library on the same thread.
 */
const char *bsc_last_error(void);

struct BscForestParams bsc_forest_params_default(void);

struct BscClusterParams bsc_cluster_params_default(void);

/**
 * Fits a forest to `n` points of dimension `dim`; stores a new handle in
 * `*out`.
 *
 * # Safety
 * `data` must hold `n * dim` doubles; `params` and `out` must be valid.
 */
enum BscStatus bsc_forest_fit(const double *data,
                              size_t n,
                              size_t dim,
                              const struct BscForestParams *params,
                              struct BscForest **out);

/**
 * Dimension of the forest's data space, or 0 for a null handle.
 *
 * # Safety
 * `forest` must be null or a live handle.
 */
size_t bsc_forest_dim(const struct BscForest *forest);

/**
 * Evaluates the density at `n` points, writing `n` values to `out`.
 *
 * # Safety
 * `forest` must be a live handle; `x` must hold `n * dim` doubles and
 * `out` room for `n` doubles.
 */
enum BscStatus bsc_forest_eval(const struct BscForest *forest,
                               const double *x,
                               size_t n,
                               size_t dim,
                               double *out);

/**
 * Serializes the forest as JSON into a new string in `*out`; release it
 * with [`bsc_string_free`].
 *
 * # Safety
 * `forest` must be a live handle and `out` valid.
 */
enum BscStatus bsc_forest_to_json(const struct BscForest *forest, char **out);

/**
 * Parses a forest from JSON.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` valid.
 */
enum BscStatus bsc_forest_from_json(const char *json, struct BscForest **out);

/**
 * # Safety
 * `forest` must be null or a handle not yet freed.
 */
void bsc_forest_free(struct BscForest *forest);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void bsc_string_free(char *s);

/**
 * Runs forest clustering with background assignment. On
 * [`BscStatus::NoValidLevel`] no handle is produced.
 *
 * # Safety
 * `data` must hold `n * dim` doubles; `params` and `out` must be valid.
 */
enum BscStatus bsc_cluster(const double *data,
                           size_t n,
                           size_t dim,
                           const struct BscClusterParams *params,
                           struct BscClusterResult **out);

/**
 * Number of labels, or 0 for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t bsc_cluster_result_len(const struct BscClusterResult *result);

/**
 * Copies the labels into `out`, which must have room for `len` values
 * with `len` equal to [`bsc_cluster_result_len`].
 *
 * # Safety
 * `result` must be a live handle and `out` writable for `len` values.
 */
enum BscStatus bsc_cluster_result_labels(const struct BscClusterResult *result,
                                         int64_t *out,
                                         size_t len);

/**
 * Level at which the clusters were read off; NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double bsc_cluster_result_rho_out(const struct BscClusterResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
size_t bsc_cluster_result_n_clusters(const struct BscClusterResult *result);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void bsc_cluster_result_free(struct BscClusterResult *result);

/**
 * Adjusted Rand index of two labelings of length `n`.
 *
 * # Safety
 * `a` and `b` must hold `n` values and `out` must be writable.
 */
enum BscStatus bsc_ari(const int64_t *a, const int64_t *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BSC_H */
