/*
 * C interface to the dertrial dose-exposure-response study engine.
 * Generated by cbindgen from crates/dertrial-ffi; do not edit by hand.
 */

#ifndef DERTRIAL_H
#define DERTRIAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a C-interface call.
 */
enum DertrialStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  /**
   * The call succeeded.
   */
  DERTRIAL_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DERTRIAL_STATUS_NULL_ARGUMENT = 1,
  /**
   * The request was malformed: unknown scenario, invalid grid, index out
   * of range, or a buffer of the wrong length.
   */
  DERTRIAL_STATUS_INVALID_CONFIG = 2,
  /**
   * The computation itself failed; see `dertrial_last_error_message`.
   */
  DERTRIAL_STATUS_RUNTIME_ERROR = 3,
  /**
   * A panic was caught at the language boundary. The handle involved is
   * left in an unspecified but safe state; freeing it remains valid.
   */
  DERTRIAL_STATUS_PANIC = 5,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum DertrialStatus DertrialStatus;
#else
typedef int32_t DertrialStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * A configured Monte Carlo study and, once run, its aggregate results.
 */
typedef struct DertrialStudy DertrialStudy;

/**
 * One aggregate comparison cell: a (trial size, confounding level,
 * estimator) combination summarised over all replications. Two-element
 * arrays hold the (intercept, slope) pair of the marginal dose-response
 * model.
 */
typedef struct DertrialRow {
  /**
   * Trial size of the cell.
   */
  uint32_t n;
  /**
   * Exposure-response confounding correlation of the cell.
   */
  double rho;
  /**
   * Whether the sequential estimator used the control-function
   * adjustment (true) or ignored confounding (false).
   */
  bool cf_adjusted;
  /**
   * Bias of the direct dose-response regression.
   */
  double bias_dr[2];
  /**
   * Bias of the sequential (dose-exposure-response) estimator.
   */
  double bias_der[2];
  /**
   * Monte Carlo variance of the direct regression.
   */
  double var_dr[2];
  /**
   * Monte Carlo variance of the sequential estimator.
   */
  double var_der[2];
  /**
   * Mean squared error of the direct regression.
   */
  double mse_dr[2];
  /**
   * Mean squared error of the sequential estimator.
   */
  double mse_der[2];
  /**
   * var(sequential) / var(direct) per coefficient.
   */
  double variance_ratio[2];
  /**
   * mse(sequential) / mse(direct) per coefficient.
   */
  double mse_ratio[2];
  /**
   * Jackknife standard error of `variance_ratio` (NaN when the study
   * ran with per-column exclusion).
   */
  double variance_ratio_se[2];
  /**
   * Jackknife standard error of `mse_ratio`.
   */
  double mse_ratio_se[2];
  /**
   * Replications dropped because an estimator failed.
   */
  uint64_t excluded_replications;
  /**
   * Replications that entered the summaries.
   */
  uint64_t used_replications;
} DertrialRow;

/**
 * Summary of the closed-form linear cross-check; see
 * [`dertrial_linear_check`].
 */
typedef struct DertrialLinearCheck {
  /**
   * Trial size used for every replication.
   */
  uint32_t n;
  /**
   * Number of replications.
   */
  uint64_t replications;
  /**
   * var(unadjusted sequential slope) / var(direct slope).
   */
  double ratio_unadjusted;
  /**
   * var(adjusted sequential slope) / var(direct slope); the adjusted
   * product is algebraically identical to the direct slope, so this is
   * exactly 1 in a working build.
   */
  double ratio_cf;
  /**
   * Closed-form large-sample prediction of `ratio_unadjusted`.
   */
  double analytic_ratio_unadjusted;
  /**
   * Largest observed |adjusted product − direct slope| across the
   * replications.
   */
  double max_identity_deviation;
  /**
   * Replications where that deviation exceeded the identity tolerance;
   * must be 0.
   */
  uint64_t identity_violations;
} DertrialLinearCheck;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a study handle for a built-in scenario, preconfigured with the
 * standard comparison grid: n ∈ {40, 80, 120}, ρ ∈ {0, 0.3, 0.6, 0.9},
 * 10000 replications, seed 123, both sequential estimators against the
 * direct regression. `scenario` selects the built-in dose grid (1 or 2);
 * `prose_noise_form` switches the generator to the alternative noise
 * parameterisation.
 *
 * On success writes the new handle to `out_study`; the caller owns it and
 * must release it with [`dertrial_study_free`].
 *
 * # Safety
 * `out_study` must be valid for writing one pointer.
 */
DertrialStatus dertrial_study_new(uint32_t scenario,
                                  bool prose_noise_form,
                                  struct DertrialStudy **out_study);

/**
 * Replaces the study's trial-size and confounding grids. The values are
 * copied before returning; previously computed results are discarded.
 * Grid validity (sizes divisible by the number of dose levels, ρ within
 * [0, 1)) is checked when the study runs.
 *
 * # Safety
 * `study` must be a live handle from [`dertrial_study_new`]; `n_values`
 * must be valid for reading `n_len` 32-bit integers and `rho_values` for
 * reading `rho_len` doubles.
 */
DertrialStatus dertrial_study_set_grid(struct DertrialStudy *study,
                                       const uint32_t *n_values,
                                       size_t n_len,
                                       const double *rho_values,
                                       size_t rho_len);

/**
 * Sets the number of Monte Carlo replications per cell. Previously
 * computed results are discarded.
 *
 * # Safety
 * `study` must be a live handle from [`dertrial_study_new`].
 */
DertrialStatus dertrial_study_set_replications(struct DertrialStudy *study, uint64_t replications);

/**
 * Sets the master seed. The same seed and configuration reproduce results
 * bit for bit, independent of thread count. Previously computed results
 * are discarded.
 *
 * # Safety
 * `study` must be a live handle from [`dertrial_study_new`].
 */
DertrialStatus dertrial_study_set_seed(struct DertrialStudy *study, uint64_t master_seed);

/**
 * Runs the configured study, replacing any previous results. Rows become
 * available through [`dertrial_study_row_count`] and
 * [`dertrial_study_row`].
 *
 * # Safety
 * `study` must be a live handle from [`dertrial_study_new`].
 */
DertrialStatus dertrial_study_run(struct DertrialStudy *study);

/**
 * Writes the number of aggregate rows the last run produced (one per
 * grid cell and estimator). Fails with [`DertrialStatus::RuntimeError`]
 * when the study has not been run since its configuration last changed.
 *
 * # Safety
 * `study` must be a live handle from [`dertrial_study_new`] and
 * `out_count` valid for writing one `size_t`.
 */
DertrialStatus dertrial_study_row_count(const struct DertrialStudy *study, size_t *out_count);

/**
 * Copies aggregate row `index` into `out_row`. Rows are ordered by trial
 * size, then confounding level, with the unadjusted estimator before the
 * adjusted one.
 *
 * # Safety
 * `study` must be a live handle from [`dertrial_study_new`] and `out_row`
 * valid for writing one [`DertrialRow`].
 */
DertrialStatus dertrial_study_row(const struct DertrialStudy *study,
                                  size_t index,
                                  struct DertrialRow *out_row);

/**
 * Writes the number of dose levels in the study's design (the length of
 * every per-dose ratio row).
 *
 * # Safety
 * `study` must be a live handle from [`dertrial_study_new`] and
 * `out_count` valid for writing one `size_t`.
 */
DertrialStatus dertrial_study_dose_count(const struct DertrialStudy *study, size_t *out_count);

/**
 * Copies the per-dose prediction-variance ratios of aggregate row
 * `index` — var(sequential prediction)/var(direct prediction) at each dose
 * level — into `out_ratios`. `out_len` must equal the study's dose count.
 *
 * # Safety
 * `study` must be a live handle from [`dertrial_study_new`] and
 * `out_ratios` valid for writing `out_len` doubles.
 */
DertrialStatus dertrial_study_per_dose_ratio(const struct DertrialStudy *study,
                                             size_t index,
                                             double *out_ratios,
                                             size_t out_len);

/**
 * Releases a study handle. Passing null is a no-op.
 *
 * # Safety
 * `study` must be null or a handle from [`dertrial_study_new`] that has
 * not already been freed.
 */
void dertrial_study_free(struct DertrialStudy *study);

/**
 * Runs the linear-model cross-check, where the sequential-versus-direct
 * comparison has closed-form answers: the adjusted sequential slope is
 * algebraically identical to the direct slope, and the unadjusted variance
 * ratio has an analytic large-sample value. Uses the scenario-1 design at
 * the given size with no confounding.
 *
 * # Safety
 * `out_summary` must be valid for writing one [`DertrialLinearCheck`].
 */
DertrialStatus dertrial_linear_check(uint32_t n,
                                     uint64_t replications,
                                     uint64_t master_seed,
                                     struct DertrialLinearCheck *out_summary);

/**
 * Returns the error message of the most recent failing call on this
 * thread, or an empty string when nothing has failed. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *dertrial_last_error_message(void);

/**
 * Returns the library version as a static nul-terminated string.
 */
const char *dertrial_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DERTRIAL_H */
