#ifndef DMC_PRUNE_H
#define DMC_PRUNE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DmcStatus {
  DMC_STATUS_OK = 0,
  DMC_STATUS_NULL_POINTER = 1,
  DMC_STATUS_INVALID_CHANNEL = 2,
  DMC_STATUS_INVALID_ARGUMENT = 3,
  DMC_STATUS_NOT_CONVERGED = 4,
  DMC_STATUS_BUDGET_EXCEEDED = 5,
  DMC_STATUS_INFEASIBLE = 6,
  DMC_STATUS_PARSE_ERROR = 7,
  DMC_STATUS_PANIC = 8,
} DmcStatus;

typedef enum DmcBoundMode {
  DMC_BOUND_MODE_SURROGATE = 0,
  DMC_BOUND_MODE_EXACT_PSEUDO = 1,
} DmcBoundMode;

/**
 * Opaque channel handle.
 */
typedef struct DmcChannel DmcChannel;

/**
 * Capacity-loss certificate. `available` is 0 when no bound could be
 * given; `bound_nats` is then NaN.
 */
typedef struct DmcBound {
  uint8_t available;
  double bound_nats;
  double capacity_pruned_nats;
  double eta;
  size_t critical_x;
  /**
   * `INFINITY` when no mixture of kept rows covers the critical row.
   */
  double delta;
  /**
   * 0 when undefined.
   */
  double kappa;
} DmcBound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a channel from `num_inputs × num_outputs` row-major entries.
 */
enum DmcStatus dmc_channel_from_rows(const double *data,
                                     size_t num_inputs,
                                     size_t num_outputs,
                                     struct DmcChannel **out_channel);

/**
 * Parses the JSON channel format (`{"num_inputs", "num_outputs", "rows"}`).
 */
enum DmcStatus dmc_channel_from_json(const char *json, struct DmcChannel **out_channel);

/**
 * Releases a handle; null is ignored.
 */
void dmc_channel_free(struct DmcChannel *channel);

enum DmcStatus dmc_channel_dims(const struct DmcChannel *channel,
                                size_t *num_inputs,
                                size_t *num_outputs);

/**
 * Capacity in nats. `input_dist` may be null; otherwise it receives
 * `num_inputs` values.
 */
enum DmcStatus dmc_capacity(const struct DmcChannel *channel,
                            double tol_nats,
                            size_t max_iter,
                            double *capacity_nats,
                            double *input_dist);

/**
 * Clustering selection of `k` inputs. `out_indices` receives `k` sorted
 * indices.
 */
enum DmcStatus dmc_select_inputs(const struct DmcChannel *channel,
                                 size_t k,
                                 size_t *out_indices,
                                 double *capacity_nats);

/**
 * Best `k`-subset over all candidates; fails with `BudgetExceeded` when
 * there are more than `budget` of them.
 */
enum DmcStatus dmc_exhaustive_select(const struct DmcChannel *channel,
                                     size_t k,
                                     uint64_t budget,
                                     size_t *out_indices,
                                     double *capacity_nats);

/**
 * Bound on the capacity lost by keeping only `kept`; `mode` is a
 * [`DmcBoundMode`] value.
 */
enum DmcStatus dmc_capacity_loss_bound(const struct DmcChannel *channel,
                                       const size_t *kept,
                                       size_t num_kept,
                                       uint32_t mode,
                                       struct DmcBound *out_bound);

/**
 * Drops rows lying in the hull of the remaining rows. `out_kept` must hold
 * `num_inputs` entries; `num_kept` receives how many were written.
 */
enum DmcStatus dmc_prune_redundant(const struct DmcChannel *channel,
                                   size_t *out_kept,
                                   size_t *num_kept);

/**
 * Message of the last failure on this thread; empty if none. Valid until
 * the next failing call on the same thread.
 */
const char *dmc_last_error_message(void);

const char *dmc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DMC_PRUNE_H */
