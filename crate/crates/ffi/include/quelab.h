#ifndef QUELAB_H
#define QUELAB_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define QUELAB_OK 0

#define QUELAB_ERR_NULL_POINTER 1

#define QUELAB_ERR_INVALID_ARGUMENT 2

#define QUELAB_ERR_DIMENSION 3

#define QUELAB_ERR_OUT_OF_RANGE 4

#define QUELAB_ERR_NUMERICAL 5

#define QUELAB_ERR_BUFFER_TOO_SMALL 6

#define QUELAB_ERR_PANIC 7

#define QUELAB_LAW_GAUSSIAN 0

#define QUELAB_LAW_RADEMACHER 1

#define QUELAB_LAW_UNIFORM 2

/**
 * A sampled Wigner matrix.
 */
typedef struct QuelabSample QuelabSample;

/**
 * Eigenvalues (ascending) and eigenvectors of a self-adjoint matrix.
 */
typedef struct QuelabSpectrum QuelabSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message (NUL-terminated, truncated to fit) into
 * `buf` and returns the full message length in bytes, excluding the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t quelab_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *quelab_version(void);

/**
 * Stieltjes transform of the semicircle law at `re + i im` (`im != 0`).
 *
 * # Safety
 * `out_re` and `out_im` must be valid for writes.
 */
int quelab_m_sc(double re, double im, double *out_re, double *out_im);

/**
 * Classical location `gamma_i` of the `i`-th eigenvalue (1-based) for size `n`,
 * the point where the semicircle distribution function reaches `i / n`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
int quelab_gamma_quantile(size_t i, size_t n, double *out);

/**
 * Number of non-crossing partitions of `k` points (`1 <= k <= 10`).
 *
 * # Safety
 * `out` must be valid for writes.
 */
int quelab_nc_count(size_t k, size_t *out);

/**
 * Samples trial `trial` of a Wigner ensemble (`beta` 1 or 2, `law` one of
 * the `QUELAB_LAW_*` constants).
 *
 * # Safety
 * `out` must be valid for writes; the handle is released with
 * `quelab_sample_free`.
 */
int quelab_sample_new(size_t n,
                      uint8_t beta,
                      int law,
                      uint64_t seed,
                      uint64_t trial,
                      struct QuelabSample **out);

/**
 * # Safety
 * `sample` must be null or a live handle from `quelab_sample_new`.
 */
void quelab_sample_free(struct QuelabSample *sample);

/**
 * Matrix dimension of a sample.
 *
 * # Safety
 * `sample` must be a live handle.
 */
size_t quelab_sample_dim(const struct QuelabSample *sample);

/**
 * Eigendecomposition of a sampled matrix.
 *
 * # Safety
 * `sample` must be a live handle and `out` valid for writes; release the
 * result with `quelab_spectrum_free`.
 */
int quelab_spectrum_of_sample(const struct QuelabSample *sample, struct QuelabSpectrum **out);

/**
 * Eigendecomposition of a real symmetric `n x n` matrix in row-major order.
 *
 * # Safety
 * `data` must be valid for `n * n` reads and `out` valid for writes.
 */
int quelab_spectrum_of_real(const double *data, size_t n, struct QuelabSpectrum **out);

/**
 * # Safety
 * `spectrum` must be null or a live handle.
 */
void quelab_spectrum_free(struct QuelabSpectrum *spectrum);

/**
 * Number of eigenvalues held by a spectrum.
 *
 * # Safety
 * `spectrum` must be a live handle.
 */
size_t quelab_spectrum_dim(const struct QuelabSpectrum *spectrum);

/**
 * Copies the ascending eigenvalues into `buf`.
 *
 * # Safety
 * `spectrum` must be a live handle and `buf` valid for `len` writes.
 */
int quelab_spectrum_eigenvalues(const struct QuelabSpectrum *spectrum, double *buf, size_t len);

/**
 * Centred self-overlap of eigenvector `k` (1-based) with the coordinates
 * listed in `members` (0-based): the mass of the vector on those coordinates
 * minus `count / n`. With `normalized != 0` the CLT-normalised value is
 * returned instead; that needs `0 < count < n`.
 *
 * # Safety
 * `spectrum` must be a live handle, `members` valid for `count` reads and
 * `out` valid for writes.
 */
int quelab_spectrum_overlap(const struct QuelabSpectrum *spectrum,
                            size_t k,
                            const size_t *members,
                            size_t count,
                            int normalized,
                            double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* QUELAB_H */
