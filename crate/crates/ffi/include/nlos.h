#ifndef NLOS_H
#define NLOS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NlosMethod {
  NLOS_METHOD_SS = 0,
  NLOS_METHOD_LOCAL_SS = 1,
  NLOS_METHOD_L1 = 2,
  NLOS_METHOD_WIENER = 3,
} NlosMethod;

typedef enum NlosScene {
  NLOS_SCENE_T_PLANE = 0,
  NLOS_SCENE_SINGLE_SURFEL = 1,
} NlosScene;

/**
 * Result code of every fallible call.
 */
typedef enum NlosStatus {
  NLOS_STATUS_OK = 0,
  NLOS_STATUS_NULL_POINTER = 1,
  NLOS_STATUS_INVALID_ARGUMENT = 2,
  NLOS_STATUS_INVALID_GRID = 3,
  NLOS_STATUS_DIMENSION_MISMATCH = 4,
  NLOS_STATUS_OUTSIDE_FRUSTUM = 5,
  NLOS_STATUS_NEGATIVE_BIN = 6,
  NLOS_STATUS_DIVERGED = 7,
  NLOS_STATUS_IO = 8,
  NLOS_STATUS_OTHER = 9,
  NLOS_STATUS_PANIC = 10,
} NlosStatus;

typedef struct NlosAlbedo NlosAlbedo;

typedef struct NlosOperator NlosOperator;

typedef struct NlosTransient NlosTransient;

typedef struct NlosSolverConfig {
  enum NlosMethod method;
  double lambda;
  uint32_t max_iters;
  double rel_tol;
  uint32_t window_len;
  double window_sigma;
  double wiener_alpha;
  bool monotone_restart;
} NlosSolverConfig;

/**
 * Scan geometry; see `ScanGrid` in the core library.
 */
typedef struct NlosGrid {
  double wall_width_m;
  uint32_t scan_res;
  double bin_width;
  uint32_t num_bins;
  uint32_t depth_res;
} NlosGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * nul-terminated) and returns the full message length in bytes, or 0 when
 * there is none.
 */
size_t nlos_last_error_message(char *buf, size_t len);

/**
 * Fills `out` with the library defaults for `method`.
 */
enum NlosStatus nlos_solver_config_default(enum NlosMethod method, struct NlosSolverConfig *out);

enum NlosStatus nlos_operator_new(const struct NlosGrid *grid, struct NlosOperator **out);

void nlos_operator_free(struct NlosOperator *op);

/**
 * Wraps `len = scan_res^2 * num_bins` values as a transient.
 */
enum NlosStatus nlos_transient_new(const struct NlosGrid *grid,
                                   const double *data,
                                   size_t len,
                                   struct NlosTransient **out);

size_t nlos_transient_len(const struct NlosTransient *t);

enum NlosStatus nlos_transient_copy(const struct NlosTransient *t, double *out, size_t len);

void nlos_transient_free(struct NlosTransient *t);

/**
 * Wraps `len = 3 * scan_res^2 * depth_res` values as a directional albedo volume.
 */
enum NlosStatus nlos_albedo_new(const struct NlosGrid *grid,
                                const double *data,
                                size_t len,
                                struct NlosAlbedo **out);

size_t nlos_albedo_len(const struct NlosAlbedo *a);

enum NlosStatus nlos_albedo_copy(const struct NlosAlbedo *a, double *out, size_t len);

void nlos_albedo_free(struct NlosAlbedo *a);

/**
 * `H rho`.
 */
enum NlosStatus nlos_forward(const struct NlosOperator *op,
                             const struct NlosAlbedo *rho,
                             struct NlosTransient **out);

/**
 * `H^T tau`.
 */
enum NlosStatus nlos_adjoint(const struct NlosOperator *op,
                             const struct NlosTransient *tau,
                             struct NlosAlbedo **out);

/**
 * Renders a built-in scene at `depth` meters. `truth` may be null.
 */
enum NlosStatus nlos_simulate(const struct NlosGrid *grid,
                              enum NlosScene scene,
                              double depth,
                              struct NlosTransient **measurement,
                              struct NlosAlbedo **truth);

/**
 * Poisson photon noise at `peak_photons` plus Gaussian read noise.
 */
enum NlosStatus nlos_apply_noise(const struct NlosTransient *clean,
                                 double peak_photons,
                                 double gaussian_sigma,
                                 uint64_t seed,
                                 struct NlosTransient **out);

/**
 * Runs the configured solver. `iterations` may be null.
 */
enum NlosStatus nlos_reconstruct(const struct NlosOperator *op,
                                 const struct NlosTransient *tau,
                                 const struct NlosSolverConfig *config,
                                 struct NlosAlbedo **out,
                                 uint32_t *iterations);

/**
 * PSNR in dB between the normalized albedo projections of two volumes.
 */
enum NlosStatus nlos_albedo_psnr(const struct NlosAlbedo *recon,
                                 const struct NlosAlbedo *truth,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLOS_H */
