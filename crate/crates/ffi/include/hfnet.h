#ifndef HFNET_H
#define HFNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum HfnetStatus {
  HFNET_STATUS_OK = 0,
  HFNET_STATUS_NULL_POINTER = 1,
  HFNET_STATUS_INVALID_UTF8 = 2,
  HFNET_STATUS_IO = 3,
  HFNET_STATUS_PARSE = 4,
  HFNET_STATUS_INVALID_MODEL = 5,
  HFNET_STATUS_DERIVE = 6,
  HFNET_STATUS_UNDERDETERMINED = 7,
  HFNET_STATUS_INCONSISTENT = 8,
  HFNET_STATUS_BUFFER_TOO_SMALL = 9,
  HFNET_STATUS_INVALID_ARGUMENT = 10,
  HFNET_STATUS_PANIC = 11,
  HFNET_STATUS_OTHER = 12,
} HfnetStatus;

// Loaded system model.
typedef struct HfnetModel HfnetModel;

// Time histories with labels.
typedef struct HfnetTrajectory HfnetTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *hfnet_last_error(void);

// Parses a model from JSON text (linear graph or bond graph).
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum HfnetStatus hfnet_model_from_json(const char *json, struct HfnetModel **out);

// Loads a model file, or a bundled fixture when `path` names one (e.g. `"electrical"`).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum HfnetStatus hfnet_model_load(const char *path, struct HfnetModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void hfnet_model_free(struct HfnetModel *model);

// Counts invariant violations. Returns `HFNET_STATUS_INVALID_MODEL` when there
// are any; the error message lists them.
//
// # Safety
// `model` must be a live handle; `issues` may be null.
enum HfnetStatus hfnet_model_validate(const struct HfnetModel *model, uintptr_t *issues);

// Derives `dx/dt = A x + B u`. Writes the state count to `n` and input count
// to `m`, then A (n×n) and B (n×m) row-major when the buffers are large enough.
//
// # Safety
// `model` must be a live handle; buffers must hold `a_len` / `b_len` values or be null.
enum HfnetStatus hfnet_state_space(const struct HfnetModel *model,
                                   uintptr_t *n,
                                   uintptr_t *m,
                                   double *a,
                                   uintptr_t a_len,
                                   double *b,
                                   uintptr_t b_len);

// Solves the time-stepped flow problem. `dt <= 0` or `steps == 0` fall back
// to the model's own grid.
//
// # Safety
// `model` must be a live handle and `out` a writable pointer.
enum HfnetStatus hfnet_solve(const struct HfnetModel *model,
                             double dt,
                             uintptr_t steps,
                             struct HfnetTrajectory **out);

// Integrates the derived state-space model; `method` 0 is forward Euler, 1 is RK4.
//
// # Safety
// `model` must be a live handle and `out` a writable pointer.
enum HfnetStatus hfnet_simulate(const struct HfnetModel *model,
                                double dt,
                                uintptr_t steps,
                                int method,
                                struct HfnetTrajectory **out);

// Number of time steps and of variables.
//
// # Safety
// `traj` must be a live handle; outputs may be null.
enum HfnetStatus hfnet_trajectory_dims(const struct HfnetTrajectory *traj,
                                       uintptr_t *steps,
                                       uintptr_t *variables);

// Label of variable `index`, such as `U[R1]` or `y[V_C1]`. Owned by the
// trajectory; null when out of range.
//
// # Safety
// `traj` must be a live handle.
const char *hfnet_trajectory_label(const struct HfnetTrajectory *traj, uintptr_t index);

// Copies the sample times.
//
// # Safety
// `traj` must be a live handle; `buf` must hold `len` values or be null.
enum HfnetStatus hfnet_trajectory_times(const struct HfnetTrajectory *traj,
                                        double *buf,
                                        uintptr_t len,
                                        uintptr_t *needed);

// Copies the values row-major: step by step, variables in label order.
//
// # Safety
// `traj` must be a live handle; `buf` must hold `len` values or be null.
enum HfnetStatus hfnet_trajectory_data(const struct HfnetTrajectory *traj,
                                       double *buf,
                                       uintptr_t len,
                                       uintptr_t *needed);

// Releases a trajectory. Null is ignored.
//
// # Safety
// `traj` must come from this library and not be used afterwards.
void hfnet_trajectory_free(struct HfnetTrajectory *traj);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HFNET_H */
