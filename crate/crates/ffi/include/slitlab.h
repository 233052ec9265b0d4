#ifndef SLITLAB_H
#define SLITLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define SLITLAB_OK 0

#define SLITLAB_ERR_INVALID_PARAMETER 1

#define SLITLAB_ERR_DIMENSION_MISMATCH 2

#define SLITLAB_ERR_NON_FINITE 3

#define SLITLAB_ERR_UNSUPPORTED 4

#define SLITLAB_ERR_INCONSISTENT_BRACKET 5

#define SLITLAB_ERR_UNREACHABLE 6

#define SLITLAB_ERR_PRECONDITION 7

#define SLITLAB_ERR_EMPTY_AVERAGE 8

#define SLITLAB_ERR_UNASSIGNED 9

#define SLITLAB_ERR_ZERO_SEMINORM 10

#define SLITLAB_ERR_MISSING_LEVEL 11

#define SLITLAB_ERR_IO 12

#define SLITLAB_ERR_SERIALIZATION 13

#define SLITLAB_ERR_NULL_POINTER 100

#define SLITLAB_ERR_UTF8 101

#define SLITLAB_ERR_PANIC 102

#define SLITLAB_ERR_BUFFER_TOO_SMALL 103

// A tabulated field on a uniform grid.
typedef struct SlitlabGrid SlitlabGrid;

// A region of the slit family.
typedef struct SlitlabRegion SlitlabRegion;

// Whitney decompositions and reflection map for one `Ω_λ`.
typedef struct SlitlabSetup SlitlabSetup;

// Shape of a grid: `cells` cells of `components` values each, spacing
// `h`, in dimension `n`.
typedef struct SlitlabGridInfo {
  size_t n;
  size_t components;
  size_t cells;
  double h;
} SlitlabGridInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *slitlab_version(void);

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into the library on this thread.
const char *slitlab_last_error(void);

// Euclidean distance from `x` (length `len`) to the `len`-fold product of
// the Cantor set with ratio `lambda`.
//
// # Safety
// `x` must point to `len` doubles and `out` to a writable double.
int32_t slitlab_cantor_distance(double lambda, const double *x, size_t len, double *out_dist);

// `dim(C_λ) = (n−1) ln 2 / ln(1/λ)`.
//
// # Safety
// `out_dim` must be writable.
int32_t slitlab_cantor_dim(double lambda, size_t n, double *out_dim);

// Create a region: `kind` is one of `d`, `n`, `omega`, `q0`.
//
// # Safety
// `kind` must be a NUL-terminated string and `out_region` writable.
int32_t slitlab_region_new(const char *kind,
                           size_t n,
                           double lambda,
                           struct SlitlabRegion **out_region);

// # Safety
// `region` must come from `slitlab_region_new` (or be NULL) and not be
// used afterwards.
void slitlab_region_free(struct SlitlabRegion *region);

// # Safety
// `region` must be live, `x` must point to `len` doubles, `out_inside`
// must be writable.
int32_t slitlab_region_contains(const struct SlitlabRegion *region,
                                const double *x,
                                size_t len,
                                bool *out_inside);

// Certified bracket `lo <= dist(x, ∂N_λ) <= hi`; `region` must be of
// kind `n`.
//
// # Safety
// As for `slitlab_region_contains`; `out_lo` and `out_hi` must be
// writable.
int32_t slitlab_region_boundary_distance(const struct SlitlabRegion *region,
                                         const double *x,
                                         size_t len,
                                         double *out_lo,
                                         double *out_hi);

// Build both Whitney decompositions and the reflection map.
//
// # Safety
// `out_setup` must be writable.
int32_t slitlab_setup_new(size_t n,
                          double lambda,
                          int32_t max_gen,
                          struct SlitlabSetup **out_setup);

// # Safety
// `setup` must come from `slitlab_setup_new` (or be NULL) and not be used
// afterwards.
void slitlab_setup_free(struct SlitlabSetup *setup);

// Numbers of cubes in the interior and complement decompositions.
//
// # Safety
// `setup` must be live and the out-pointers writable.
int32_t slitlab_setup_cube_counts(const struct SlitlabSetup *setup,
                                  size_t *out_interior,
                                  size_t *out_complement);

// `‖∇Eu‖_p(N) / ‖∇u‖_p(Ω)` for a test function spec such as
// `jump:depth=3`, `coord:1` or `random:seed=7`, on a grid of spacing `h`.
//
// # Safety
// `setup` must be live, `spec` NUL-terminated, `out_ratio` writable.
int32_t slitlab_setup_ratio(const struct SlitlabSetup *setup,
                            const char *spec,
                            double p,
                            double h,
                            double *out_ratio);

// Tabulate `Eu` over the bounding box of `D`, dropping unassigned cubes.
//
// # Safety
// `setup` must be live, `spec` NUL-terminated, `out_grid` writable.
int32_t slitlab_setup_extend(const struct SlitlabSetup *setup,
                             const char *spec,
                             double h,
                             struct SlitlabGrid **out_grid);

// # Safety
// `grid` must be live and `out_info` writable.
int32_t slitlab_grid_info(const struct SlitlabGrid *grid, struct SlitlabGridInfo *out_info);

// Copy values (`cells * components`, last axis fastest) and the mask
// (`cells` bytes; 0 marks cells outside the discrete domain). Either
// buffer may be NULL to skip it.
//
// # Safety
// Non-NULL buffers must hold the stated number of elements.
int32_t slitlab_grid_copy(const struct SlitlabGrid *grid,
                          double *values,
                          size_t values_len,
                          uint8_t *mask,
                          size_t mask_len);

// # Safety
// `grid` must come from the library (or be NULL) and not be used
// afterwards.
void slitlab_grid_free(struct SlitlabGrid *grid);

// Closed-form norm factor; `INFINITY` when it diverges.
//
// # Safety
// `out_factor` must be writable.
int32_t slitlab_norm_factor(double lambda, size_t n, double p, double *out_factor);

// Net-based upper estimate of the dimension of `C_λ × {0}` using
// `levels + 1` nets with `2λ^i` separation.
//
// # Safety
// The out-pointers must be writable.
int32_t slitlab_dim_estimate(double lambda,
                             size_t n,
                             size_t levels,
                             uint64_t seed,
                             double *out_s,
                             bool *out_certified);

// Run an experiment from TOML text; `out_dir` (nullable) overrides the
// output directory. `out_passed` reports whether every sub-check passed.
//
// # Safety
// `config_toml` must be NUL-terminated, `out_dir` NULL or NUL-terminated,
// `out_passed` writable.
int32_t slitlab_run_config(const char *config_toml, const char *out_dir, bool *out_passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLITLAB_H */
