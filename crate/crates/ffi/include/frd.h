#ifndef FRD_H
#define FRD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum FrdStatus {
  FRD_STATUS_OK = 0,
  FRD_STATUS_NULL_POINTER = 1,
  FRD_STATUS_INVALID_ARGUMENT = 2,
  FRD_STATUS_INVALID_GEOMETRY = 3,
  FRD_STATUS_INVALID_COEFFICIENTS = 4,
  FRD_STATUS_NUMERICAL = 5,
  FRD_STATUS_IO = 6,
  FRD_STATUS_OUT_OF_RANGE = 7,
  FRD_STATUS_BUFFER_SIZE = 8,
  FRD_STATUS_PANIC = 9,
} FrdStatus;

// Opaque decomposition handle.
typedef struct FrdDecomposition FrdDecomposition;

// Opaque sampler handle; independent of the decomposition it came from.
typedef struct FrdSampler FrdSampler;

// Lattice and component sizes of a decomposition.
typedef struct FrdShape {
  size_t dim;
  size_t components;
  size_t base;
  size_t depth;
  size_t side;
  size_t site_count;
} FrdShape;

// Checks computed with the decomposition.
typedef struct FrdDiagnostics {
  // Largest entry of `|Σ_k C_k − G|`.
  double sum_residual;
  // Largest far-field deviation over levels with a finite range.
  double max_range_residual;
  // Smallest eigenvalue over all kernel symbols.
  double min_psd_eigenvalue;
  double imag_residue;
  double symmetry_residual;
} FrdDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a NUL-terminated static string.
const char *frd_version(void);

// Copies the calling thread's last error message into `buf` (truncated and
// NUL-terminated when `len > 0`). Returns the full message length in bytes,
// excluding the terminator; pass `buf = NULL` to query it.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t frd_last_error_message(char *buf, size_t len);

// Decomposes the Green's function on `(Z / base^depth Z)^dim` with the
// default cube schedule. `coefficients` holds `A[(r, j), (s, k)]` row-major
// with `(dim * components)^2` entries, or a single value `a` for `a · I`.
//
// # Safety
// `coefficients` must point to `len` doubles; `out` must be writable.
enum FrdStatus frd_decompose(size_t dim,
                             size_t components,
                             size_t base,
                             size_t depth,
                             const double *coefficients,
                             size_t len,
                             struct FrdDecomposition **out);

// Decomposes from a JSON run configuration, the same format the `frd`
// command line tool reads.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum FrdStatus frd_decompose_json(const char *json, struct FrdDecomposition **out);

// Releases a decomposition; null is ignored.
//
// # Safety
// `h` must be null or a handle from this library not yet freed.
void frd_decomposition_free(struct FrdDecomposition *h);

// # Safety
// `h` must be a live handle and `out` writable.
enum FrdStatus frd_decomposition_shape(const struct FrdDecomposition *h, struct FrdShape *out);

// # Safety
// `h` must be a live handle and `out` writable.
enum FrdStatus frd_decomposition_diagnostics(const struct FrdDecomposition *h,
                                             struct FrdDiagnostics *out);

// Finite range `r_k` of level `k` in `1..=depth`, or `-1` for a skipped
// level (whose kernel vanishes). The last level `depth + 1` has no finite
// range and also reports `-1`.
//
// # Safety
// `h` must be a live handle and `out` writable.
enum FrdStatus frd_kernel_range(const struct FrdDecomposition *h, size_t k, int64_t *out);

// Copies the kernel of level `k` (`0` for the full Green's function,
// `1..=depth + 1` for the scales) into `out`, which must hold exactly
// `site_count * m * m` doubles.
//
// # Safety
// `h` must be a live handle and `out` must point to `len` writable doubles.
enum FrdStatus frd_kernel_copy(const struct FrdDecomposition *h, size_t k, double *out, size_t len);

// Creates a sampler for the Gaussian fields with covariances `C_k`. Draws
// are a pure function of `(seed, k, index)`.
//
// # Safety
// `h` must be a live handle and `out` writable.
enum FrdStatus frd_sampler_new(const struct FrdDecomposition *h,
                               uint64_t seed,
                               struct FrdSampler **out);

// Releases a sampler; null is ignored.
//
// # Safety
// `s` must be null or a handle from this library not yet freed.
void frd_sampler_free(struct FrdSampler *s);

// Draws sample `index` of level `k` (`1..=depth + 1`), or of the total field
// when `k = 0`, into `out` of `site_count * m` doubles.
//
// # Safety
// `s` must be a live handle and `out` must point to `len` writable doubles.
enum FrdStatus frd_sampler_draw(const struct FrdSampler *s,
                                size_t k,
                                uint64_t index,
                                double *out,
                                size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRD_H */
