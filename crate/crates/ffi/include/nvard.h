#ifndef NVARD_H
#define NVARD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NvardStatus {
  NVARD_STATUS_OK = 0,
  NVARD_STATUS_NULL_POINTER = 1,
  NVARD_STATUS_INVALID_ARGUMENT = 2,
  NVARD_STATUS_DIMENSION = 3,
  NVARD_STATUS_NON_FINITE = 4,
  NVARD_STATUS_RANK_DEFICIENT = 5,
  NVARD_STATUS_UNDEFINED_MEAN = 6,
  NVARD_STATUS_DIVERGENCE = 7,
  NVARD_STATUS_BUFFER_TOO_SMALL = 8,
  NVARD_STATUS_PANIC = 9,
  NVARD_STATUS_OTHER = 10,
} NvardStatus;

// Closed-form posterior of the constant-coefficient model.
typedef struct NvardFit NvardFit;

// Flows, covariates and weights of one panel.
typedef struct NvardPanel NvardPanel;

// Gibbs output of the time-varying model.
typedef struct NvardVcFit NvardVcFit;

// Sampler settings. `pooled != 0` ties the varying block across periods.
typedef struct NvardGibbsConfig {
  size_t chain_length;
  size_t burn_in;
  size_t thin;
  uint64_t seed;
  size_t n_chains;
  int32_t pooled;
} NvardGibbsConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into this library from the same thread.
const char *nvard_last_error(void);

// Library version as a static NUL-terminated string.
const char *nvard_version(void);

struct NvardGibbsConfig nvard_gibbs_config_default(void);

// Build a panel from `periods + 1` flow matrices (`Y_0..Y_T`) and `m`
// covariates given for `cov_periods` periods starting at period 1, each
// period a block of `n(n-1) x m` values, pair-major. Weights are equal.
//
// # Safety
// `flows` must point to `(periods + 1) * n * n` doubles and `covariates`
// to `cov_periods * n * (n - 1) * m` doubles (may be null when that is 0).
enum NvardStatus nvard_panel_new(size_t n,
                                 size_t periods,
                                 const double *flows,
                                 size_t m,
                                 size_t cov_periods,
                                 const double *covariates,
                                 struct NvardPanel **out);

// # Safety
// `panel` must come from [`nvard_panel_new`] and not be used afterwards.
void nvard_panel_free(struct NvardPanel *panel);

// Number of design columns `7 + m`.
//
// # Safety
// `panel` must be a live handle or null.
enum NvardStatus nvard_panel_columns(const struct NvardPanel *panel, size_t *out);

// Fit the constant-coefficient model on periods `1..=last`.
//
// # Safety
// `panel` must be a live handle; `out` must be writable.
enum NvardStatus nvard_fit(const struct NvardPanel *panel, size_t last, struct NvardFit **out);

// # Safety
// `fit` must come from [`nvard_fit`] and not be used afterwards.
void nvard_fit_free(struct NvardFit *fit);

// Posterior mean of the coefficients into `out[0..K]`.
//
// # Safety
// `fit` must be a live handle; `out` must hold `len` doubles.
enum NvardStatus nvard_fit_mean(const struct NvardFit *fit, double *out, size_t len);

// Degrees of freedom and the inverse-gamma shape and rate of the error variance.
//
// # Safety
// `fit` must be a live handle; the outputs must be writable.
enum NvardStatus nvard_fit_variance(const struct NvardFit *fit,
                                    double *dof,
                                    double *shape,
                                    double *rate);

// Forecast of period `t` (built from the flows at `t - 1`) into
// `out[0..n(n-1)]`.
//
// # Safety
// Handles must be live; `out` must hold `len` doubles.
enum NvardStatus nvard_fit_predict(const struct NvardFit *fit,
                                   const struct NvardPanel *panel,
                                   size_t t,
                                   double *out,
                                   size_t len);

// Run the Gibbs sampler on periods `1..=last` with the design columns
// listed in `varying` drifting over time.
//
// # Safety
// `panel` and `config` must be valid; `varying` must hold `n_varying` indices.
enum NvardStatus nvard_vc_fit(const struct NvardPanel *panel,
                              size_t last,
                              const size_t *varying,
                              size_t n_varying,
                              const struct NvardGibbsConfig *config,
                              struct NvardVcFit **out);

// # Safety
// `fit` must come from [`nvard_vc_fit`] and not be used afterwards.
void nvard_vc_fit_free(struct NvardVcFit *fit);

// Posterior means of the observation and state variances.
//
// # Safety
// `fit` must be a live handle; the outputs must be writable.
enum NvardStatus nvard_vc_fit_variances(const struct NvardVcFit *fit,
                                        double *sigma2_eps,
                                        double *sigma2_u);

// Posterior mean of the full coefficient vector at training period `t`
// (1-based) into `out[0..K]`.
//
// # Safety
// `fit` must be a live handle; `out` must hold `len` doubles.
enum NvardStatus nvard_vc_fit_coefficients(const struct NvardVcFit *fit,
                                           size_t t,
                                           double *out,
                                           size_t len);

// Forecast of period `t` from the last training state.
//
// # Safety
// Handles must be live; `out` must hold `len` doubles.
enum NvardStatus nvard_vc_fit_predict(const struct NvardVcFit *fit,
                                      const struct NvardPanel *panel,
                                      size_t t,
                                      double *out,
                                      size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NVARD_H */
