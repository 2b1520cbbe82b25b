#ifndef DP_KDE_H
#define DP_KDE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum DpKdeStatus {
  DP_KDE_STATUS_OK = 0,
  DP_KDE_STATUS_NULL_POINTER = 1,
  DP_KDE_STATUS_INVALID_ARGUMENT = 2,
  DP_KDE_STATUS_OUT_OF_DOMAIN = 3,
  DP_KDE_STATUS_DIMENSION_MISMATCH = 4,
  DP_KDE_STATUS_IO = 5,
  DP_KDE_STATUS_FORMAT = 6,
  DP_KDE_STATUS_PANIC = 7,
} DpKdeStatus;

/**
 * Released structure handle.
 */
typedef struct DpKdeStructure DpKdeStructure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds an l1 structure over `n` row-major points of dimension `d` in
 * `[0, bound)^d`. `noisy = false` releases exact statistics.
 *
 * # Safety
 * `points` must be valid for `n * d` reads and `out` for one write.
 */
enum DpKdeStatus dp_kde_build_l1(const double *points,
                                 size_t n,
                                 size_t d,
                                 double bound,
                                 double epsilon,
                                 bool noisy,
                                 uint64_t seed,
                                 struct DpKdeStructure **out);

/**
 * Builds an `||x - y||_p^p` structure.
 *
 * # Safety
 * As [`dp_kde_build_l1`].
 */
enum DpKdeStatus dp_kde_build_lpp(const double *points,
                                  size_t n,
                                  size_t d,
                                  double bound,
                                  uint32_t p,
                                  double epsilon,
                                  bool noisy,
                                  uint64_t seed,
                                  struct DpKdeStructure **out);

/**
 * Builds an l2 structure with embedding distortion `alpha`.
 *
 * # Safety
 * As [`dp_kde_build_l1`].
 */
enum DpKdeStatus dp_kde_build_l2(const double *points,
                                 size_t n,
                                 size_t d,
                                 double alpha,
                                 double epsilon,
                                 bool noisy,
                                 uint64_t seed,
                                 struct DpKdeStructure **out);

/**
 * Reads a structure file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum DpKdeStatus dp_kde_load(const char *path, struct DpKdeStructure **out);

/**
 * Writes a structure file.
 *
 * # Safety
 * `handle` must come from this library and `path` be NUL-terminated.
 */
enum DpKdeStatus dp_kde_save(const struct DpKdeStructure *handle, const char *path);

/**
 * Answers one query of dimension `d`.
 *
 * # Safety
 * `handle` must come from this library, `y` be valid for `d` reads and
 * `out` for one write.
 */
enum DpKdeStatus dp_kde_query(const struct DpKdeStructure *handle,
                              const double *y,
                              size_t d,
                              double *out);

/**
 * Query dimension, or 0 for a null handle.
 *
 * # Safety
 * `handle` must be null or come from this library.
 */
size_t dp_kde_dim(const struct DpKdeStructure *handle);

/**
 * Total privacy budget spent by the release, or NaN for a null handle.
 *
 * # Safety
 * `handle` must be null or come from this library.
 */
double dp_kde_epsilon(const struct DpKdeStructure *handle);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `handle` must be null or come from this library and not be used again.
 */
void dp_kde_free(struct DpKdeStructure *handle);

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *dp_kde_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DP_KDE_H */
