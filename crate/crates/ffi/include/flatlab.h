#ifndef FLATLAB_H
#define FLATLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlatlabStatus {
  FLATLAB_STATUS_OK = 0,
  FLATLAB_STATUS_NULL_POINTER = 1,
  FLATLAB_STATUS_INVALID_INPUT = 2,
  FLATLAB_STATUS_DIMENSION_MISMATCH = 3,
  FLATLAB_STATUS_NOT_CONVERGED = 4,
  FLATLAB_STATUS_SINGULAR = 5,
  FLATLAB_STATUS_QUADRATURE_BUDGET = 6,
  FLATLAB_STATUS_REGIME_MISMATCH = 7,
  FLATLAB_STATUS_IO = 8,
  FLATLAB_STATUS_BUFFER_TOO_SMALL = 9,
  FLATLAB_STATUS_PANIC = 10,
} FlatlabStatus;

typedef enum FlatlabRegime {
  FLATLAB_REGIME_ONE_GAP = 0,
  FLATLAB_REGIME_ONE_GAP_EXCEPTIONAL42 = 1,
  FLATLAB_REGIME_TWO_GAP = 2,
  FLATLAB_REGIME_TWO_GAP_EXCEPTIONAL1_NM1 = 3,
  FLATLAB_REGIME_GENERIC = 4,
} FlatlabRegime;

typedef enum FlatlabReduction {
  FLATLAB_REDUCTION_NONE = 0,
  FLATLAB_REDUCTION_TRACE_REDUCED = 1,
  FLATLAB_REDUCTION_TRACE_CUTOFF = 2,
} FlatlabReduction;

/**
 * Opaque Haar sampler handle (seed and dimension).
 */
typedef struct FlatlabSampler FlatlabSampler;

/**
 * Opaque spectrum handle.
 */
typedef struct FlatlabSpectrum FlatlabSpectrum;

/**
 * Monte Carlo result with its 95% Wilson interval.
 */
typedef struct FlatlabEstimate {
  double p_hat;
  double ci_low;
  double ci_high;
  uint64_t hits;
  uint64_t total;
  enum FlatlabReduction reduction;
} FlatlabEstimate;

/**
 * Quadrature value, error estimate, and a nonzero flag when converged.
 */
typedef struct FlatlabQuadValue {
  double value;
  double error;
  int32_t converged;
} FlatlabQuadValue;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *flatlab_last_error(void);

/**
 * Builds a spectrum from `n` values (sorted on entry).
 *
 * # Safety
 * `values` must point to `n` readable doubles; `out` must be writable.
 */
enum FlatlabStatus flatlab_spectrum_new(const double *values,
                                        size_t n,
                                        struct FlatlabSpectrum **out);

/**
 * # Safety
 * `s` must come from [`flatlab_spectrum_new`] and not be used afterwards.
 */
void flatlab_spectrum_free(struct FlatlabSpectrum *s);

/**
 * Dimension of `s`, or 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t flatlab_spectrum_dim(const struct FlatlabSpectrum *s);

/**
 * Copies the sorted values of `s` into `buf` of length `len`.
 *
 * # Safety
 * `s` must be a live handle and `buf` writable for `len` doubles.
 */
enum FlatlabStatus flatlab_spectrum_values(const struct FlatlabSpectrum *s,
                                           double *buf,
                                           size_t len);

/**
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum FlatlabStatus flatlab_l_n(const struct FlatlabSpectrum *s, double *out);

/**
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum FlatlabStatus flatlab_a_n(const struct FlatlabSpectrum *s, double *out);

/**
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum FlatlabStatus flatlab_tilde_beta(const struct FlatlabSpectrum *s, double *out);

/**
 * Regime of `s` and its 1-based largest-gap index.
 *
 * # Safety
 * `s` must be a live handle; `kind` and `gap_index` writable.
 */
enum FlatlabStatus flatlab_classify(const struct FlatlabSpectrum *s,
                                    enum FlatlabRegime *kind,
                                    size_t *gap_index);

/**
 * Haar sampler for dimension `n`.
 *
 * # Safety
 * `out` must be writable.
 */
enum FlatlabStatus flatlab_sampler_new(uint64_t seed, size_t n, struct FlatlabSampler **out);

/**
 * # Safety
 * `s` must come from [`flatlab_sampler_new`] and not be used afterwards.
 */
void flatlab_sampler_free(struct FlatlabSampler *s);

/**
 * Haar rotation number `index` of the sampler's stream, row-major into
 * `buf` of length at least `n²`.
 *
 * # Safety
 * `sampler` must be a live handle and `buf` writable for `len` doubles.
 */
enum FlatlabStatus flatlab_haar_rotation(const struct FlatlabSampler *sampler,
                                         uint64_t index,
                                         double *buf,
                                         size_t len);

/**
 * Monte Carlo `I_n(λ; r)` from the first `samples` rotations of `sampler`.
 *
 * # Safety
 * `s` and `sampler` must be live handles; `out` writable.
 */
enum FlatlabStatus flatlab_estimate_i(const struct FlatlabSpectrum *s,
                                      double radius,
                                      uint64_t samples,
                                      const struct FlatlabSampler *sampler,
                                      struct FlatlabEstimate *out);

/**
 * `I_n(λ; r)` from the interlacing recursion, `n ≤ 4`, with the default
 * budget for the dimension.
 *
 * # Safety
 * `s` must be a live handle; `out` writable.
 */
enum FlatlabStatus flatlab_recursive_i(const struct FlatlabSpectrum *s,
                                       double radius,
                                       struct FlatlabQuadValue *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLATLAB_H */
