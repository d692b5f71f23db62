#ifndef ROUGHFBM_H
#define ROUGHFBM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RfbmStatus {
  RFBM_STATUS_OK = 0,
  RFBM_STATUS_NULL_POINTER = 1,
  RFBM_STATUS_DOMAIN = 2,
  RFBM_STATUS_NON_CONVERGENCE = 3,
  RFBM_STATUS_DIMENSION_MISMATCH = 4,
  RFBM_STATUS_LEVEL_MISMATCH = 5,
  RFBM_STATUS_INVALID_INPUT = 6,
  RFBM_STATUS_INVARIANT = 7,
  RFBM_STATUS_CONFIG = 8,
  RFBM_STATUS_FORMAT = 9,
  RFBM_STATUS_IO = 10,
  RFBM_STATUS_BUFFER_TOO_SMALL = 11,
  RFBM_STATUS_PANIC = 12,
} RfbmStatus;

/**
 * Brownian increments on a dyadic grid.
 */
typedef struct RfbmIncrements RfbmIncrements;

/**
 * Calibrated Hurst model; the kernel primitive is built on first use.
 */
typedef struct RfbmModel RfbmModel;

/**
 * Level-2 lift on a dyadic output grid.
 */
typedef struct RfbmPath RfbmPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length of the last error message on this thread, without the NUL.
 */
uintptr_t rfbm_last_error_length(void);

/**
 * Copy the last error message (NUL-terminated, truncated to `len - 1`
 * bytes) and return its full length.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
uintptr_t rfbm_last_error_message(char *buf, uintptr_t len);

/**
 * Calibrate `c_H` for `hurst`; `quad_tol <= 0` selects the default.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RfbmStatus rfbm_model_new(double hurst,
                               double quad_tol,
                               bool allow_extended,
                               struct RfbmModel **out);

/**
 * # Safety
 * `model` must come from [`rfbm_model_new`] and not be used afterwards.
 */
void rfbm_model_free(struct RfbmModel *model);

/**
 * # Safety
 * Pointers must be valid.
 */
enum RfbmStatus rfbm_model_c_h(const struct RfbmModel *model, double *out);

/**
 * `K(t, s)`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RfbmStatus rfbm_kernel(const struct RfbmModel *model, double t, double s, double *out);

/**
 * `K_m(t, s)`, the dyadic projection of the kernel.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RfbmStatus rfbm_kernel_projected(const struct RfbmModel *model,
                                      uint32_t m,
                                      double t,
                                      double s,
                                      double *out);

/**
 * `∫ |K(t,·) - K_m(t,·)|²`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RfbmStatus rfbm_l2_projection_error(const struct RfbmModel *model,
                                         double t,
                                         uint32_t m,
                                         double *out);

/**
 * `∫ |(K(t,·) - K(s,·)) - (K_m(t,·) - K_m(s,·))|²`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RfbmStatus rfbm_l2_increment_error(const struct RfbmModel *model,
                                        double s,
                                        double t,
                                        uint32_t m,
                                        double *out);

/**
 * Draw `2^m × d` Brownian increments from stream `(seed, stream_id)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RfbmStatus rfbm_sample_brownian(uint32_t m,
                                     uintptr_t d,
                                     uint64_t seed,
                                     uint64_t stream_id,
                                     struct RfbmIncrements **out);

/**
 * Wrap caller-provided increments, `2^m × d` row-major.
 *
 * # Safety
 * `data` must hold `2^m · d` values; `out` must be valid.
 */
enum RfbmStatus rfbm_increments_from_data(uint32_t m,
                                          uintptr_t d,
                                          const double *data,
                                          struct RfbmIncrements **out);

/**
 * # Safety
 * `inc` must come from this library and not be used afterwards.
 */
void rfbm_increments_free(struct RfbmIncrements *inc);

/**
 * # Safety
 * Pointers must be valid.
 */
enum RfbmStatus rfbm_increments_shape(const struct RfbmIncrements *inc, uint32_t *m, uintptr_t *d);

/**
 * Copy the increments, `2^m × d` row-major, into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` values.
 */
enum RfbmStatus rfbm_increments_copy(const struct RfbmIncrements *inc, double *buf, uintptr_t len);

/**
 * Block sums onto the coarser level `m`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RfbmStatus rfbm_increments_coarsen(const struct RfbmIncrements *inc,
                                        uint32_t m,
                                        struct RfbmIncrements **out);

/**
 * `W(m)` on the level-`level` grid: `(2^level + 1) × d` values, row-major.
 *
 * # Safety
 * `buf` must be valid for `len` values; other pointers must be valid.
 */
enum RfbmStatus rfbm_eval_wm(const struct RfbmModel *model,
                             const struct RfbmIncrements *inc,
                             uint32_t level,
                             double *buf,
                             uintptr_t len);

/**
 * Level-2 lift of `W(m)` on the `output_level` grid, by refinement.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RfbmStatus rfbm_lift_wm(const struct RfbmModel *model,
                             const struct RfbmIncrements *inc,
                             uint32_t output_level,
                             struct RfbmPath **out);

/**
 * Linear lift of sampled values, `(2^level + 1) × d` row-major, first row zero.
 *
 * # Safety
 * `values` must hold `(2^level + 1) · d` values; `out` must be valid.
 */
enum RfbmStatus rfbm_lift_linear(uint32_t level,
                                 uintptr_t d,
                                 const double *values,
                                 struct RfbmPath **out);

/**
 * # Safety
 * `path` must come from this library and not be used afterwards.
 */
void rfbm_path_free(struct RfbmPath *path);

/**
 * Level-1 (`d`) and level-2 (`d²`, row-major) increment between grid
 * indices `i <= j`.
 *
 * # Safety
 * `lvl1` must hold `d` values and `lvl2` `d²` values.
 */
enum RfbmStatus rfbm_path_increment(const struct RfbmPath *path,
                                    uintptr_t i,
                                    uintptr_t j,
                                    double *lvl1,
                                    double *lvl2);

/**
 * # Safety
 * Pointers must be valid.
 */
enum RfbmStatus rfbm_path_shape(const struct RfbmPath *path, uint32_t *level, uintptr_t *d);

/**
 * Modulus distance over the pairs of the `grid_level` grid.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RfbmStatus rfbm_modulus_distance(const struct RfbmPath *x,
                                      const struct RfbmPath *y,
                                      double p,
                                      uint32_t grid_level,
                                      double *out);

/**
 * `F_i` (`k - 1` values) and `G_i` (`k` values) from exponents `m[k]`,
 * `a[k - 1]` and `b[k]`, with `k = ⌊p⌋ ∧ 2`.
 *
 * # Safety
 * Arrays must have the stated lengths.
 */
enum RfbmStatus rfbm_compute_fg(double p,
                                uintptr_t k,
                                const uint32_t *m,
                                const double *a,
                                const double *b,
                                double *f_out,
                                double *g_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROUGHFBM_H */
