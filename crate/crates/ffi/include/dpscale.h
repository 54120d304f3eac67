#ifndef DPSCALE_H
#define DPSCALE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every entry point.
 */
typedef enum DpscaleStatus {
  Ok = 0,
  NullPointer = 1,
  InvalidArgument = 2,
  /**
   * Closed forms require s * r < 1.
   */
  ClosedFormInvalid = 3,
  /**
   * No noise multiplier reaches the requested budget.
   */
  UnattainableBudget = 4,
  NonFinite = 5,
  InternalError = 6,
} DpscaleStatus;

/**
 * Opaque scaling-rule handle.
 */
typedef struct DpscaleRule DpscaleRule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static name for a status code, for log messages. Never null.
 */
const char *dpscale_status_name(enum DpscaleStatus status);

/**
 * Hard clipping: weight = min(1, c / norm).
 */
enum DpscaleStatus dpscale_rule_new_vanilla_clip(double c, double r, struct DpscaleRule **out);

/**
 * Normalized scaling: weight = 1 / (norm + r).
 */
enum DpscaleStatus dpscale_rule_new_auto_s(double c, double r, struct DpscaleRule **out);

/**
 * Non-monotonous scaling: weight = c / (norm + r / (norm + r)).
 */
enum DpscaleStatus dpscale_rule_new_psac(double c, double r, struct DpscaleRule **out);

/**
 * Coefficient-scaled variant: weight = c / (s * norm + r / (norm + r)).
 */
enum DpscaleStatus dpscale_rule_new_psasc(double c, double r, double s, struct DpscaleRule **out);

/**
 * Releases a rule handle. Null is a no-op.
 */
void dpscale_rule_free(struct DpscaleRule *rule);

/**
 * Scalar weight applied to a gradient of the given norm.
 */
enum DpscaleStatus dpscale_rule_weight(const struct DpscaleRule *rule, double norm, double *out);

/**
 * Worst-case scaled-gradient norm (the rule's l2-sensitivity).
 */
enum DpscaleStatus dpscale_rule_sensitivity(const struct DpscaleRule *rule, double *out);

/**
 * Scales `gradient` (length `len`) into `out` (same length; may alias the
 * input).
 */
enum DpscaleStatus dpscale_rule_scale(const struct DpscaleRule *rule,
                                      const double *gradient,
                                      uintptr_t len,
                                      double *out);

/**
 * Location and value of the rule's weight maximum (requires s * r < 1).
 */
enum DpscaleStatus dpscale_rule_max_weight(const struct DpscaleRule *rule,
                                           double *norm_at_max,
                                           double *max_value);

/**
 * Single-release Gaussian-mechanism noise scale for (epsilon, delta).
 */
enum DpscaleStatus dpscale_calibrate_sigma_single(double epsilon,
                                                  double delta,
                                                  double sensitivity,
                                                  double *out);

/**
 * Accountant epsilon after `steps` subsampled Gaussian releases. Vacuous
 * bounds come back as positive infinity with `Ok`.
 */
enum DpscaleStatus dpscale_account_epsilon(double sigma,
                                           double sampling_rate,
                                           uintptr_t steps,
                                           double delta,
                                           double *out);

/**
 * Smallest noise multiplier whose accountant epsilon fits the budget.
 */
enum DpscaleStatus dpscale_calibrate_sigma_for_budget(double epsilon,
                                                      double delta,
                                                      double sampling_rate,
                                                      uintptr_t steps,
                                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPSCALE_H */
