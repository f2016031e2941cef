#ifndef DGM_H
#define DGM_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum DgmStatus {
  DGM_STATUS_OK = 0,
  DGM_STATUS_NULL_POINTER = 1,
  DGM_STATUS_INVALID_ARGUMENT = 2,
  DGM_STATUS_DIMENSION_MISMATCH = 3,
  DGM_STATUS_INITIALIZATION_FAILED = 4,
  DGM_STATUS_NUMERICAL_FAILURE = 5,
  DGM_STATUS_UNSUPPORTED = 6,
  DGM_STATUS_PANIC = 7,
} DgmStatus;

/**
 * Samples returned by [`dgm_run_chmc`].
 */
typedef struct DgmChain DgmChain;

/**
 * A generative model.
 */
typedef struct DgmModel DgmModel;

/**
 * Sampler settings; start from [`dgm_sampler_config_default`].
 */
typedef struct DgmSamplerConfig {
  double dt;
  size_t n_steps;
  size_t n_geodesic;
  double eps_proj;
  size_t max_newton_iters;
  size_t max_fallback_iters;
  bool check_reversibility;
  double reversibility_factor;
  uint64_t seed;
} DgmSamplerConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *dgm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dgm_version(void);

struct DgmSamplerConfig dgm_sampler_config_default(void);

/**
 * `y = wᵀu` with `u ~ N(0, I)`.
 *
 * # Safety
 * `weights` must point to `n` doubles and `out` to writable storage.
 */
enum DgmStatus dgm_model_linear_gaussian(const double *weights, size_t n, struct DgmModel **out);

/**
 * Squared norm of a standard normal pair.
 *
 * # Safety
 * `out` must point to writable storage.
 */
enum DgmStatus dgm_model_circle(struct DgmModel **out);

/**
 * `y = z³ + 0.5·u₂`.
 *
 * # Safety
 * `out` must point to writable storage.
 */
enum DgmStatus dgm_model_toy1d(struct DgmModel **out);

/**
 * Lotka–Volterra simulator over `steps` steps with default settings
 * otherwise.
 *
 * # Safety
 * `out` must point to writable storage.
 */
enum DgmStatus dgm_model_lotka_volterra(size_t steps, struct DgmModel **out);

/**
 * # Safety
 * `model` must come from a `dgm_model_*` constructor or be null.
 */
void dgm_model_free(struct DgmModel *model);

/**
 * Input, observed and latent dimensions. Any output pointer may be null.
 *
 * # Safety
 * `model` must be a live handle; non-null outputs must be writable.
 */
enum DgmStatus dgm_model_dims(const struct DgmModel *model,
                              size_t *inputs,
                              size_t *observed,
                              size_t *latents);

/**
 * Writes `g_y(u)` into `y`.
 *
 * # Safety
 * `u` must hold `n_u` doubles and `y` room for `n_y`.
 */
enum DgmStatus dgm_model_observe(const struct DgmModel *model,
                                 const double *u,
                                 size_t n_u,
                                 double *y,
                                 size_t n_y);

/**
 * Runs constrained HMC conditioned on `observation` and returns the chain.
 * The random stream is fixed by `config.seed`.
 *
 * # Safety
 * `model` must be live, `observation` must hold `n_obs` doubles, `config`
 * must be readable and `out` writable.
 */
enum DgmStatus dgm_run_chmc(const struct DgmModel *model,
                            const double *observation,
                            size_t n_obs,
                            const struct DgmSamplerConfig *config,
                            size_t n_samples,
                            size_t burn_in,
                            struct DgmChain **out);

/**
 * # Safety
 * `chain` must come from [`dgm_run_chmc`] or be null.
 */
void dgm_chain_free(struct DgmChain *chain);

/**
 * Stored sample count; zero for a null handle.
 *
 * # Safety
 * `chain` must be live or null.
 */
size_t dgm_chain_len(const struct DgmChain *chain);

/**
 * Fraction of accepted proposals; zero for a null handle.
 *
 * # Safety
 * `chain` must be live or null.
 */
double dgm_chain_accept_rate(const struct DgmChain *chain);

/**
 * Copies the latents row-major (`len × latent_dim`) into `out`, which must
 * hold exactly that many doubles.
 *
 * # Safety
 * `chain` must be live and `out` must have room for `n` doubles.
 */
enum DgmStatus dgm_chain_latents(const struct DgmChain *chain, double *out, size_t n);

/**
 * Geyer effective sample size of `n ≥ 10` values.
 *
 * # Safety
 * `series` must hold `n` doubles and `out` must be writable.
 */
enum DgmStatus dgm_effective_sample_size(const double *series, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DGM_H */
