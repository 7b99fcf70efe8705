#ifndef EXPRESSIVITY_H
#define EXPRESSIVITY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ExprStatus {
  EXPR_STATUS_OK = 0,
  EXPR_STATUS_NULL_POINTER = 1,
  EXPR_STATUS_INVALID_UTF8 = 2,
  EXPR_STATUS_PARSE = 3,
  EXPR_STATUS_INVALID_ARGUMENT = 4,
  /**
   * Operation needs piecewise-linear activations or a precondition failed.
   */
  EXPR_STATUS_UNSUPPORTED = 5,
  EXPR_STATUS_PANIC = 6,
} ExprStatus;

/**
 * Opaque network handle.
 */
typedef struct ExprNetwork ExprNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null if the previous call succeeded.
 * The pointer stays valid until the next call on the same thread.
 */
const char *expr_last_error_message(void);

/**
 * Parses and validates a network from a JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum ExprStatus expr_network_from_json(const char *json, struct ExprNetwork **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `net` must come from [`expr_network_from_json`] and not be freed twice.
 */
void expr_network_free(struct ExprNetwork *net);

/**
 * # Safety
 * `net` must be a live handle.
 */
enum ExprStatus expr_network_n_inputs(const struct ExprNetwork *net, size_t *out);

/**
 * Depth of the network (longest input-to-unit path).
 *
 * # Safety
 * `net` must be a live handle.
 */
enum ExprStatus expr_network_depth(const struct ExprNetwork *net, size_t *out);

/**
 * Average width as an exact fraction.
 *
 * # Safety
 * `net` must be a live handle.
 */
enum ExprStatus expr_network_omega(const struct ExprNetwork *net, uint64_t *numer, uint64_t *denom);

/**
 * Evaluates the network at `x` (length `n`).
 *
 * # Safety
 * `x` must point to `n` doubles.
 */
enum ExprStatus expr_network_forward(const struct ExprNetwork *net,
                                     const double *x,
                                     size_t n,
                                     double *out);

/**
 * Break points of the output restricted to the segment from `x` to `y`.
 *
 * # Safety
 * `x` and `y` must each point to `n` doubles.
 */
enum ExprStatus expr_network_breakpoints(const struct ExprNetwork *net,
                                         const double *x,
                                         const double *y,
                                         size_t n,
                                         size_t *out);

/**
 * Break-point upper bound for `t` pieces, average width `omega_num/omega_den`
 * and depth `d`. `overflow` is set to 1 when the value does not fit a double
 * (the value is then +inf).
 *
 * # Safety
 * `out` and `overflow` must be writable.
 */
enum ExprStatus expr_breakpoint_upper_bound(size_t t,
                                            uint64_t omega_num,
                                            uint64_t omega_den,
                                            size_t d,
                                            double *out,
                                            uint8_t *overflow);

/**
 * Grid-search multiplier and hidden-unit lower bound for a catalog target.
 * `n` of zero selects the target's default dimension. The unit bound is NaN
 * when `t < 2`.
 *
 * # Safety
 * `target` must be a NUL-terminated string.
 */
enum ExprStatus expr_theorem2_bound(const char *target,
                                    size_t n,
                                    double epsilon,
                                    size_t t,
                                    size_t grid,
                                    double *multiplier,
                                    double *hidden_units_lb);

/**
 * Output error bound after an activation swap with sup gap `gap`.
 *
 * # Safety
 * `out` must be writable.
 */
enum ExprStatus expr_theorem3_bound(double delta,
                                    double a,
                                    uint64_t omega_num,
                                    uint64_t omega_den,
                                    size_t d,
                                    double gap,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPRESSIVITY_H */
