#ifndef BLINDMC_H
#define BLINDMC_H

/* Generated by cbindgen from blindmc-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Estimator selector for `blindmc_deconvolve`.
 */
typedef enum BlindmcMethod {
  BLINDMC_METHOD_CC = 0,
  BLINDMC_METHOD_SCCC = 1,
  BLINDMC_METHOD_ALT_EIG = 2,
  BLINDMC_METHOD_RTPM = 3,
} BlindmcMethod;

/*
 Outcome of a bindings call.
 */
typedef enum BlindmcStatus {
  BLINDMC_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  BLINDMC_STATUS_NULL_ARGUMENT = 1,
  /*
   Shapes, sizes, or option values that do not make sense together.
   */
  BLINDMC_STATUS_INVALID_ARGUMENT = 2,
  /*
   A data file could not be parsed.
   */
  BLINDMC_STATUS_PARSE_ERROR = 3,
  /*
   An estimator failed numerically.
   */
  BLINDMC_STATUS_NUMERICAL_ERROR = 4,
  /*
   The filesystem said no.
   */
  BLINDMC_STATUS_IO_ERROR = 5,
  /*
   A panic was caught at the boundary; state is unchanged.
   */
  BLINDMC_STATUS_INTERNAL_PANIC = 6,
} BlindmcStatus;

/*
 Opaque: a validated bilinear basis (M blocks of K×D).
 */
typedef struct BlindmcBasis BlindmcBasis;

/*
 Opaque: the result of one estimator run.
 */
typedef struct BlindmcEstimate BlindmcEstimate;

/*
 Opaque: M channel outputs of shared length L.
 */
typedef struct BlindmcObservations BlindmcObservations;

/*
 Options for one deconvolution run. Obtain defaults from
 `blindmc_solver_options_default` and override fields as needed.
 */
typedef struct BlindmcSolverOptions {
  enum BlindmcMethod method;
  /*
   Iteration cap for the alternating methods; ≥ 1.
   */
  uint32_t max_iters;
  /*
   Convergence threshold on the sin-angle step between iterates; > 0.
   */
  double tol;
  /*
   Noise-variance estimate σ̂² used by the debiasing shift; ≥ 0
   (0 disables compensation).
   */
  double sigma_hat_sq;
} BlindmcSolverOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Version of the bindings as a static NUL-terminated string.
 */
const char *blindmc_version(void);

/*
 Copies the most recent error message for this thread into `buf`
 (NUL-terminated, truncated to `cap` bytes) and returns the full
 message length in bytes, excluding the NUL. Call with `cap` 0 to
 query the length alone.
 */
size_t blindmc_last_error_message(char *buf, size_t cap);

/*
 Builds a basis from `channels` blocks of `taps`×`dim` complex entries:
 `data` holds channels·taps·dim re/im pairs, blocks concatenated in
 channel order, row-major within each block.
 */
enum BlindmcStatus blindmc_basis_create(size_t channels,
                                        size_t taps,
                                        size_t dim,
                                        const double *data,
                                        struct BlindmcBasis **out);

/*
 Loads a basis from the JSON file format used by the CLI.
 */
enum BlindmcStatus blindmc_basis_read_json(const char *path, struct BlindmcBasis **out);

/*
 Channel count M of the basis; 0 for a null handle.
 */
size_t blindmc_basis_channels(const struct BlindmcBasis *basis);

/*
 Taps per channel K; 0 for a null handle.
 */
size_t blindmc_basis_taps(const struct BlindmcBasis *basis);

/*
 Subspace dimension D; 0 for a null handle.
 */
size_t blindmc_basis_dim(const struct BlindmcBasis *basis);

/*
 Destroys a basis handle; a null handle is a no-op.
 */
void blindmc_basis_free(struct BlindmcBasis *basis);

/*
 Builds an observation set from `channels` outputs of `len` complex
 samples each: `data` holds channels·len re/im pairs, one channel after
 another.
 */
enum BlindmcStatus blindmc_observations_create(size_t channels,
                                               size_t len,
                                               const double *data,
                                               struct BlindmcObservations **out);

/*
 Loads observations from the CSV file format used by the CLI.
 */
enum BlindmcStatus blindmc_observations_read_csv(const char *path,
                                                 struct BlindmcObservations **out);

/*
 Channel count M; 0 for a null handle.
 */
size_t blindmc_observations_channels(const struct BlindmcObservations *obs);

/*
 Observation length L; 0 for a null handle.
 */
size_t blindmc_observations_len(const struct BlindmcObservations *obs);

/*
 Destroys an observation handle; a null handle is a no-op.
 */
void blindmc_observations_free(struct BlindmcObservations *obs);

/*
 Fills `out` with the default options: RTPM, 50 iterations, tolerance
 1e-10, no noise compensation.
 */
enum BlindmcStatus blindmc_solver_options_default(struct BlindmcSolverOptions *out);

/*
 Runs one estimator on the observations under the given basis. On
 success `*out` owns the result; free it with `blindmc_estimate_free`.
 */
enum BlindmcStatus blindmc_deconvolve(const struct BlindmcObservations *obs,
                                      const struct BlindmcBasis *basis,
                                      const struct BlindmcSolverOptions *options,
                                      struct BlindmcEstimate **out);

/*
 Length of the stacked channel estimate in complex entries (M·K);
 0 for a null handle.
 */
size_t blindmc_estimate_channel_len(const struct BlindmcEstimate *est);

/*
 Copies the stacked unit-norm channel estimate into `out` as re/im
 pairs; `cap` counts doubles and must be at least 2·M·K.
 */
enum BlindmcStatus blindmc_estimate_channels(const struct BlindmcEstimate *est,
                                             double *out,
                                             size_t cap);

/*
 Whether this estimate carries per-channel gains (the bilinear methods).
 */
bool blindmc_estimate_has_gains(const struct BlindmcEstimate *est);

/*
 Copies the unit-norm gain estimate (M re/im pairs).
 */
enum BlindmcStatus blindmc_estimate_gains(const struct BlindmcEstimate *est,
                                          double *out,
                                          size_t cap);

/*
 Whether this estimate carries subspace coefficients (absent for CC).
 */
bool blindmc_estimate_has_coeffs(const struct BlindmcEstimate *est);

/*
 Copies the unit-norm coefficient estimate (D re/im pairs).
 */
enum BlindmcStatus blindmc_estimate_coeffs(const struct BlindmcEstimate *est,
                                           double *out,
                                           size_t cap);

/*
 Number of iterations the estimator ran (0 for the one-shot methods).
 */
size_t blindmc_estimate_iterations(const struct BlindmcEstimate *est);

/*
 Whether the iteration stopped by meeting its tolerance.
 */
bool blindmc_estimate_converged(const struct BlindmcEstimate *est);

/*
 Whether any eigenproblem along the way had a numerically repeated
 extremal eigenvalue.
 */
bool blindmc_estimate_degenerate(const struct BlindmcEstimate *est);

/*
 Wall-clock seconds the estimator spent.
 */
double blindmc_estimate_elapsed_seconds(const struct BlindmcEstimate *est);

/*
 Destroys an estimate handle; a null handle is a no-op.
 */
void blindmc_estimate_free(struct BlindmcEstimate *est);

/*
 Sine of the principal angle between two complex vectors of `len`
 entries (each passed as 2·len interleaved doubles). Invariant to
 scaling of either argument.
 */
enum BlindmcStatus blindmc_sin_angle(const double *u, const double *v, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLINDMC_H */
