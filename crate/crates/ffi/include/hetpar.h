#ifndef HETPAR_H
#define HETPAR_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Timing source for [`hetpar_scheduler_new`].
typedef enum HetparClock {
  HETPAR_CLOCK_MONOTONIC = 0,
  HETPAR_CLOCK_THREAD_CPU = 1,
} HetparClock;

// Affinity policy for [`hetpar_scheduler_new`].
typedef enum HetparPinning {
  HETPAR_PINNING_STRICT = 0,
  HETPAR_PINNING_BEST_EFFORT = 1,
  HETPAR_PINNING_OFF = 2,
} HetparPinning;

// Result codes returned by every fallible function.
typedef enum HetparStatus {
  HETPAR_STATUS_OK = 0,
  HETPAR_STATUS_INVALID_ARGUMENT = 1,
  HETPAR_STATUS_NULL_POINTER = 2,
  HETPAR_STATUS_DEGENERATE_TIMING = 3,
  HETPAR_STATUS_PINNING_FAILED = 4,
  HETPAR_STATUS_RESOURCE_EXHAUSTED = 5,
  HETPAR_STATUS_TASK_FAILED = 6,
  HETPAR_STATUS_POOL_CLOSED = 7,
  HETPAR_STATUS_DIMENSION_MISMATCH = 8,
  HETPAR_STATUS_INTERNAL = 99,
} HetparStatus;

// Opaque scheduler: a pinned pool plus its performance table.
typedef struct HetparScheduler HetparScheduler;

// Opaque performance table.
typedef struct HetparTable HetparTable;

// Range callback: computes units `[start, end)` on worker `core`.
//
// Called concurrently from several worker threads with disjoint ranges.
typedef void (*HetparRangeFn)(void *ctx, size_t core, size_t start, size_t end);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *hetpar_last_error(void);

// Library version as a static NUL-terminated string.
const char *hetpar_version(void);

// Creates a table with `n_cores` entries per kernel class.
enum HetparStatus hetpar_table_new(size_t n_cores,
                                   double alpha,
                                   double initial_ratio,
                                   struct HetparTable **out);

// Releases a table. NULL is ignored.
void hetpar_table_free(struct HetparTable *table);

// Copies the current ratios for `class` into `out` (`n` = core count).
enum HetparStatus hetpar_table_get_ratios(const struct HetparTable *table,
                                          const char *class_,
                                          double *out,
                                          size_t n);

// Applies one filtered update from caller-measured timings and writes the
// new ratios to `out_ratios` (may be NULL).
enum HetparStatus hetpar_table_update(const struct HetparTable *table,
                                      const char *class_,
                                      const double *elapsed_s,
                                      const size_t *units,
                                      size_t n,
                                      double *out_ratios);

// Unfiltered ratio update; a pure function of its inputs.
enum HetparStatus hetpar_raw_update(const double *ratios,
                                    const double *elapsed_s,
                                    const size_t *units,
                                    size_t n,
                                    double *out);

// Proportional split of `total_units` into `out_partitions[n]`.
enum HetparStatus hetpar_split(size_t total_units,
                               const double *ratios,
                               size_t n,
                               size_t granularity,
                               size_t *out_partitions);

// Equal split of `total_units` across `n_cores`.
enum HetparStatus hetpar_static_equal_split(size_t total_units,
                                            size_t n_cores,
                                            size_t granularity,
                                            size_t *out_partitions);

// Starts one worker per entry of `core_ids`.
enum HetparStatus hetpar_scheduler_new(const size_t *core_ids,
                                       size_t n_cores,
                                       enum HetparPinning pinning,
                                       enum HetparClock clock,
                                       double alpha,
                                       double initial_ratio,
                                       struct HetparScheduler **out);

// Joins the workers and releases the scheduler. NULL is ignored.
void hetpar_scheduler_free(struct HetparScheduler *sched);

// Number of workers.
size_t hetpar_scheduler_cores(const struct HetparScheduler *sched);

// Writes per-worker pinning success (1/0) into `out[n]`.
enum HetparStatus hetpar_scheduler_pinned(const struct HetparScheduler *sched,
                                          uint8_t *out,
                                          size_t n);

// Copies the scheduler's ratios for `class` into `out[n]`.
enum HetparStatus hetpar_scheduler_get_ratios(const struct HetparScheduler *sched,
                                              const char *class_,
                                              double *out,
                                              size_t n);

// One proportional launch of `kernel` over `total_units`.
//
// Each of the `n`-element output buffers may be NULL. When `update` is
// nonzero the ratios for `class` are re-estimated from the timings.
enum HetparStatus hetpar_scheduler_run(struct HetparScheduler *sched,
                                       const char *class_,
                                       size_t total_units,
                                       size_t granularity,
                                       HetparRangeFn kernel,
                                       void *ctx,
                                       int32_t update,
                                       size_t *out_partitions,
                                       double *out_elapsed_s,
                                       double *out_ratios,
                                       double *out_makespan_s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HETPAR_H */
