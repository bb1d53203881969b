#ifndef OCRL_H
#define OCRL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome. Mirrors the CLI's exit-code numbering, with dedicated codes
 * for boundary misuse.
 */
typedef enum OcrlStatus {
  OcrlStatus_Ok = 0,
  /**
   * Invalid problem description or arguments.
   */
  OcrlStatus_InvalidConfig = 1,
  /**
   * Divergence, non-convergence, or any other numeric failure.
   */
  OcrlStatus_Numeric = 2,
  OcrlStatus_Io = 3,
  OcrlStatus_NullPointer = 4,
  /**
   * A panic was caught at the boundary.
   */
  OcrlStatus_Panic = 5,
} OcrlStatus;

/**
 * Opaque finite MDP handle.
 */
typedef struct OcrlMdp OcrlMdp;

/**
 * First/second derivative callback: `f(x, user_data)`.
 */
typedef double (*OcrlScalarFn)(double, void*);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Stationary discrete-time Riccati solve for an `n`-state, `m`-input plant.
 *
 * `a` is n*n, `b` is n*m, `q` is n*n, `r` is m*m, all row-major. On success
 * the stationary value matrix is written to `s_out` (n*n, row-major) and
 * the gain of the optimal policy u = -Kx to `k_out` (m*n, row-major).
 *
 * # Safety
 * All pointers must be non-null and sized as documented.
 */
enum OcrlStatus ocrl_lqr_discrete_infinite(uintptr_t n,
                                           uintptr_t m,
                                           const double *a,
                                           const double *b,
                                           const double *q,
                                           const double *r,
                                           double *s_out,
                                           double *k_out);

/**
 * Builds a `width` x `height` gridworld whose last cell is the absorbing
 * goal and hands back an owned handle through `out`.
 *
 * # Safety
 * `out` must be non-null; the handle must be released with
 * [`ocrl_mdp_free`].
 */
enum OcrlStatus ocrl_gridworld_new(uintptr_t width,
                                   uintptr_t height,
                                   double step_reward,
                                   double goal_reward,
                                   double discount,
                                   struct OcrlMdp **out);

/**
 * Number of states of the MDP behind `handle`, written to `out`.
 *
 * # Safety
 * `handle` must come from a constructor in this library and be live.
 */
enum OcrlStatus ocrl_mdp_num_states(const struct OcrlMdp *handle, uintptr_t *out);

/**
 * Runs value iteration to tolerance `theta` and writes the optimal value
 * of every state to `values_out` and the greedy action index to
 * `actions_out` (both of length `num_states`).
 *
 * # Safety
 * `handle` must be live; the output arrays must hold `num_states` entries.
 */
enum OcrlStatus ocrl_mdp_value_iteration(const struct OcrlMdp *handle,
                                         double theta,
                                         double *values_out,
                                         uint32_t *actions_out);

/**
 * Releases a handle. Passing null is a no-op.
 *
 * # Safety
 * `handle` must not be used after this call.
 */
void ocrl_mdp_free(struct OcrlMdp *handle);

/**
 * Newton iteration x <- x - fp(x)/fpp(x) from `x0` until |fp(x)| < tol.
 * The final point goes to `x_out`, the step count to `iters_out`.
 *
 * # Safety
 * The callbacks must be safe to call with `user_data`; the output pointers
 * must be non-null.
 */
enum OcrlStatus ocrl_newton_raphson_1d(OcrlScalarFn fp,
                                       OcrlScalarFn fpp,
                                       void *user_data,
                                       double x0,
                                       uintptr_t max_iters,
                                       double tol,
                                       double *x_out,
                                       uintptr_t *iters_out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* OCRL_H */
