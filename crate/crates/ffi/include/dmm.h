#ifndef DMM_H
#define DMM_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DmmStatus {
  DMM_STATUS_OK = 0,
  DMM_STATUS_NULL_POINTER = 1,
  DMM_STATUS_INVALID_ARGUMENT = 2,
  DMM_STATUS_CONFIG = 3,
  DMM_STATUS_IO = 4,
  DMM_STATUS_NUMERIC = 5,
  DMM_STATUS_HASH_MISMATCH = 6,
  DMM_STATUS_PANIC = 7,
} DmmStatus;

/**
 * Parsed run configuration.
 */
typedef struct DmmConfig DmmConfig;

/**
 * Finite-state rate matrix, columns summing to zero.
 */
typedef struct DmmRateMatrix DmmRateMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *dmm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dmm_version(void);

/**
 * Loads and validates a JSON run configuration.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum DmmStatus dmm_config_load(const char *path, struct DmmConfig **out);

/**
 * Overrides the master seed.
 *
 * # Safety
 * `cfg` must come from [`dmm_config_load`].
 */
enum DmmStatus dmm_config_set_seed(struct DmmConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be null or come from [`dmm_config_load`], and is not used afterwards.
 */
void dmm_config_free(struct DmmConfig *cfg);

/**
 * Trains and writes the checkpoint, loss log and manifest into `out_dir`.
 *
 * # Safety
 * `cfg` must come from [`dmm_config_load`]; `out_dir` must be NUL-terminated.
 */
enum DmmStatus dmm_train(const struct DmmConfig *cfg, const char *out_dir);

/**
 * Samples from the checkpoint in `out_dir`. A negative `n` or `steps` keeps
 * the configured value.
 *
 * # Safety
 * `cfg` must come from [`dmm_config_load`]; `out_dir` must be NUL-terminated.
 */
enum DmmStatus dmm_sample(const struct DmmConfig *cfg,
                          const char *out_dir,
                          int64_t n,
                          int64_t steps);

/**
 * Builds a rate matrix from `n * n` row-major entries, `rates[y * n + x]`
 * being the rate from `x` to `y`.
 *
 * # Safety
 * `rates` must point to `n * n` doubles and `out` be writable.
 */
enum DmmStatus dmm_rate_matrix_new(size_t n, const double *rates, struct DmmRateMatrix **out);

/**
 * # Safety
 * `rm` must be null or a live handle, and is not used afterwards.
 */
void dmm_rate_matrix_free(struct DmmRateMatrix *rm);

/**
 * Number of states, or 0 for a null handle.
 *
 * # Safety
 * `rm` must be null or a live handle.
 */
size_t dmm_rate_matrix_size(const struct DmmRateMatrix *rm);

/**
 * Copies the `n * n` entries into `out`.
 *
 * # Safety
 * `rm` must be a live handle and `out` point to `len` writable doubles.
 */
enum DmmStatus dmm_rate_matrix_rates(const struct DmmRateMatrix *rm, double *out, size_t len);

/**
 * Backward rate matrix for a score table `scores[x * n + y] = s(x, y)`.
 *
 * # Safety
 * `rm` must be a live handle, `scores` point to `n * n` doubles and `out` be writable.
 */
enum DmmStatus dmm_rate_matrix_backward(const struct DmmRateMatrix *rm,
                                        const double *scores,
                                        struct DmmRateMatrix **out);

/**
 * Evolves the density `p0` under the constant generator for time `t`,
 * writing the result into `out`.
 *
 * # Safety
 * `rm` must be a live handle; `p0` and `out` must point to `len` doubles.
 */
enum DmmStatus dmm_evolve_density(const struct DmmRateMatrix *rm,
                                  const double *p0,
                                  size_t len,
                                  double t,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DMM_H */
