#ifndef DYNABO_H
#define DYNABO_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call. Values from 10 up match the `dynabo` CLI exit codes.
typedef enum DynaboStatus {
  DYNABO_STATUS_OK = 0,
  DYNABO_STATUS_NULL_ARGUMENT = 1,
  DYNABO_STATUS_INVALID_UTF8 = 2,
  DYNABO_STATUS_PANIC = 3,
  DYNABO_STATUS_SCHEMA = 10,
  DYNABO_STATUS_NO_FLAT_TOP = 11,
  DYNABO_STATUS_DEGENERATE_DATA = 12,
  DYNABO_STATUS_DEGENERATE_PROFILE = 13,
  DYNABO_STATUS_EMPTY_DATASET = 14,
  DYNABO_STATUS_NON_FINITE_LOSS = 15,
  DYNABO_STATUS_NUMERICAL_FAILURE = 16,
  DYNABO_STATUS_EMPTY_CANDIDATES = 17,
  DYNABO_STATUS_NO_GYROTRONS = 18,
  DYNABO_STATUS_RANGE = 19,
  DYNABO_STATUS_DATASET_NOT_FOUND = 20,
  DYNABO_STATUS_SESSION_NOT_FOUND = 21,
  DYNABO_STATUS_VALIDATION = 22,
  DYNABO_STATUS_STALE_WRITE = 23,
  DYNABO_STATUS_CONFIG = 24,
  DYNABO_STATUS_IO = 30,
  DYNABO_STATUS_JSON = 31,
  DYNABO_STATUS_CSV = 32,
} DynaboStatus;

// Synthetic plant configuration.
typedef struct DynaboPlant DynaboPlant;

// Between-shot session store.
typedef struct DynaboService DynaboService;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dynabo_version(void);

// Machine-readable code of the last failure on this thread (for example
// `"stale_write"`), or NULL after a successful call. Valid until the next
// call into the library on this thread.
const char *dynabo_last_error_code(void);

// Human-readable message of the last failure on this thread, or NULL.
// Same lifetime as [`dynabo_last_error_code`].
const char *dynabo_last_error_message(void);

// Release a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and must not be used afterwards.
void dynabo_string_free(char *s);

// Open a session store.
//
// `config_path` (TOML) and `prior_dir` may be NULL for defaults and a zero
// prior. `data_dir` holds `<name>.csv` datasets that sessions can start
// from.
//
// # Safety
// String arguments must be NUL-terminated or NULL where allowed; `out` must
// be writable.
enum DynaboStatus dynabo_service_open(const char *config_path,
                                      const char *prior_dir,
                                      const char *data_dir,
                                      struct DynaboService **out);

// Release a store. NULL is ignored.
//
// # Safety
// `svc` must come from [`dynabo_service_open`] and must not be used
// afterwards.
void dynabo_service_free(struct DynaboService *svc);

// Create a session from a JSON request (NULL or `""` for all defaults).
// Writes the session summary as JSON.
//
// # Safety
// Pointers must be valid; see the module conventions.
enum DynaboStatus dynabo_session_create(const struct DynaboService *svc,
                                        const char *request_json,
                                        char **out_json);

// Propose an ECH profile for `target_beta_n`. A NaN `alpha` uses the
// session's exploration weight.
//
// # Safety
// Pointers must be valid; see the module conventions.
enum DynaboStatus dynabo_session_propose(const struct DynaboService *svc,
                                         const char *session_id,
                                         double target_beta_n,
                                         double alpha,
                                         char **out_json);

// Record a measured shot given as JSON. The body must carry the current
// `version`; a mismatch returns [`DynaboStatus::StaleWrite`].
//
// # Safety
// Pointers must be valid; see the module conventions.
enum DynaboStatus dynabo_session_record(const struct DynaboService *svc,
                                        const char *session_id,
                                        const char *shot_json,
                                        char **out_json);

// Write the full shot and proposal history of a session as JSON.
//
// # Safety
// Pointers must be valid; see the module conventions.
enum DynaboStatus dynabo_session_history(const struct DynaboService *svc,
                                         const char *session_id,
                                         char **out_json);

// Write the session summary as JSON.
//
// # Safety
// Pointers must be valid; see the module conventions.
enum DynaboStatus dynabo_session_summary(const struct DynaboService *svc,
                                         const char *session_id,
                                         char **out_json);

// Plant from the `[plant]` table of a TOML run configuration, or the
// default plant when `config_path` is NULL.
//
// # Safety
// `config_path` must be NUL-terminated or NULL; `out` must be writable.
enum DynaboStatus dynabo_plant_new(const char *config_path, struct DynaboPlant **out);

// Release a plant. NULL is ignored.
//
// # Safety
// `plant` must come from [`dynabo_plant_new`] and must not be used
// afterwards.
void dynabo_plant_free(struct DynaboPlant *plant);

// Length of the plant state vector, or 0 for NULL.
//
// # Safety
// `plant` must be a live handle or NULL.
size_t dynabo_plant_state_dim(const struct DynaboPlant *plant);

// Per-step tearing probability for a state and a 7-channel action.
//
// # Safety
// `state` and `action` must point to `state_len` and `action_len` doubles;
// `out` must be writable.
enum DynaboStatus dynabo_plant_hazard(const struct DynaboPlant *plant,
                                      const double *state,
                                      size_t state_len,
                                      const double *action,
                                      size_t action_len,
                                      double *out);

// Run one shot from a JSON request and write the trajectory as JSON.
//
// # Safety
// Pointers must be valid; see the module conventions.
enum DynaboStatus dynabo_plant_run_shot(const struct DynaboPlant *plant,
                                        const char *request_json,
                                        char **out_json);

// Cumulative regret of `n` times-to-onset against `tau_max`, written to
// `out[0..n]`.
//
// # Safety
// `outcomes` and `out` must point to `n` doubles.
enum DynaboStatus dynabo_cumulative_regret(const double *outcomes,
                                           size_t n,
                                           double tau_max,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYNABO_H */
