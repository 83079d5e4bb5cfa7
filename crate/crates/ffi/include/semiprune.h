#ifndef SEMIPRUNE_H
#define SEMIPRUNE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  // A required pointer argument was null.
  SP_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SP_STATUS_INVALID_STRING = 2,
  SP_STATUS_IO = 3,
  SP_STATUS_FORMAT = 4,
  SP_STATUS_INVARIANT = 5,
  SP_STATUS_DIMENSION = 6,
  SP_STATUS_DOMAIN = 7,
  SP_STATUS_DEGENERATE = 8,
  SP_STATUS_CONFIG = 9,
  // The engine panicked; this is a bug.
  SP_STATUS_PANIC = 10,
} SpStatus;

typedef enum SpMetric {
  SP_METRIC_AUM = 0,
  SP_METRIC_DUAL = 1,
  SP_METRIC_FORGETTING = 2,
  SP_METRIC_EL2N = 3,
} SpMetric;

typedef enum SpMethod {
  SP_METHOD_DOUBLE_END = 0,
  SP_METHOD_BETA = 1,
  SP_METHOD_TOP_K = 2,
  SP_METHOD_BOTTOM_K = 3,
  SP_METHOD_RANDOM = 4,
} SpMethod;

// Opaque trajectory log.
typedef struct SpLog SpLog;

// Opaque selection plan.
typedef struct SpPlan SpPlan;

// Opaque label pool.
typedef struct SpPool SpPool;

// Opaque score table.
typedef struct SpScores SpScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a
// success. Valid until the next call into this library on the same thread.
const char *sp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *sp_version(void);

// Reads a `TRJ1` file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SpStatus sp_log_read(const char *path, struct SpLog **out);

// Builds a log from `n * t * c` probabilities in example, epoch, class
// order. Epoch ids are `1..=t`.
//
// # Safety
// `probs` must point to `n * t * c` floats; `out` must be writable.
enum SpStatus sp_log_new(size_t n, size_t t, size_t c, const float *probs, struct SpLog **out);

// Writes a log in `TRJ1` format.
//
// # Safety
// `log` must be a live handle; `path` a NUL-terminated string.
enum SpStatus sp_log_write(const struct SpLog *log, const char *path);

// Number of examples, epochs and classes. Any out pointer may be null.
//
// # Safety
// `log` must be a live handle.
enum SpStatus sp_log_dims(const struct SpLog *log, size_t *n, size_t *t, size_t *c);

// # Safety
// `log` must be null or a handle not yet freed.
void sp_log_free(struct SpLog *log);

// Pool from per-example labels. `is_ground_truth` may be null (no
// example is marked as ground truth).
//
// # Safety
// `labels` must point to `n` values and `is_ground_truth`, when non-null,
// to `n` bytes; `out` must be writable.
enum SpStatus sp_pool_new(const uint32_t *labels,
                          const uint8_t *is_ground_truth,
                          size_t n,
                          size_t n_classes,
                          struct SpPool **out);

// Pool stored in the log's label section.
//
// # Safety
// `log` must be a live handle; `out` must be writable.
enum SpStatus sp_pool_from_log(const struct SpLog *log, struct SpPool **out);

// # Safety
// `pool` must be null or a handle not yet freed.
void sp_pool_free(struct SpPool *pool);

// Scores every example. `window` and `gamma` apply to DUAL, `n_early` to
// EL2N; other metrics ignore them.
//
// # Safety
// `log` and `pool` must be live handles; `out` must be writable.
enum SpStatus sp_score(const struct SpLog *log,
                       const struct SpPool *pool,
                       enum SpMetric metric,
                       size_t window,
                       double gamma,
                       size_t n_early,
                       struct SpScores **out);

// # Safety
// `scores` must be a live handle.
size_t sp_scores_len(const struct SpScores *scores);

// Copies scores and prediction means into caller buffers of length `len`
// (which must equal the table length). Either buffer may be null.
//
// # Safety
// `scores` must be a live handle; non-null buffers must hold `len` doubles.
enum SpStatus sp_scores_copy(const struct SpScores *scores,
                             double *out_scores,
                             double *out_pred_mean,
                             size_t len);

// # Safety
// `scores` must be null or a handle not yet freed.
void sp_scores_free(struct SpScores *scores);

// Selects a coreset keeping `round(n * (1 - r))` examples. `cutoff`
// applies to double-end; `concentration`, `c_d` and `q` to Beta sampling;
// `seed` to Beta and random.
//
// # Safety
// `scores` must be a live handle; `out` must be writable.
enum SpStatus sp_select(const struct SpScores *scores,
                        enum SpMethod method,
                        double r,
                        double cutoff,
                        double concentration,
                        double c_d,
                        double q,
                        uint64_t seed,
                        struct SpPlan **out);

// # Safety
// `plan` must be a live handle.
size_t sp_plan_len(const struct SpPlan *plan);

// Copies the ascending selected indices into a buffer of length `len`
// (which must equal the plan length).
//
// # Safety
// `plan` must be a live handle; `out` must hold `len` values.
enum SpStatus sp_plan_indices(const struct SpPlan *plan, uint64_t *out, size_t len);

// Writes the plan in the engine's text format.
//
// # Safety
// `plan` must be a live handle; `path` a NUL-terminated string.
enum SpStatus sp_plan_write(const struct SpPlan *plan, const char *path);

// # Safety
// `plan` must be null or a handle not yet freed.
void sp_plan_free(struct SpPlan *plan);

// Beta sampler shape at ratio `r`.
//
// # Safety
// `alpha` and `beta` must be writable.
enum SpStatus sp_beta_params(double r,
                             double mu_d,
                             double concentration,
                             double c_d,
                             double *alpha,
                             double *beta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMIPRUNE_H */
