#ifndef IDLEPOWER_H
#define IDLEPOWER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IpStatus {
  IP_STATUS_OK = 0,
  IP_STATUS_NULL_POINTER = 1,
  IP_STATUS_INVALID_UTF8 = 2,
  IP_STATUS_INVALID_SCENARIO = 3,
  /**
   * The command was parsed or applied and refused; the reply is still
   * returned.
   */
  IP_STATUS_COMMAND_REJECTED = 4,
  IP_STATUS_ENGINE = 5,
  IP_STATUS_PANIC = 6,
} IpStatus;

/**
 * Opaque simulation engine.
 */
typedef struct IpEngine IpEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an engine from a built-in scenario such as `"dual_core_phone"`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IpStatus ip_engine_new_builtin(const char *name, struct IpEngine **out);

/**
 * Creates an engine from a scenario document in JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IpStatus ip_engine_from_json(const char *json, struct IpEngine **out);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` must come from this library and not be used afterwards.
 */
void ip_engine_free(struct IpEngine *engine);

/**
 * Current simulated instant, in minutes since midnight of day 0.
 *
 * # Safety
 * `engine` and `out` must be valid pointers.
 */
enum IpStatus ip_engine_now(const struct IpEngine *engine, uint64_t *out);

/**
 * Advances the simulation to the absolute instant `end` (inclusive).
 *
 * # Safety
 * `engine` must be a valid pointer.
 */
enum IpStatus ip_engine_run_until(struct IpEngine *engine, uint64_t end);

/**
 * Remaining battery charge in mAh.
 *
 * # Safety
 * `engine` and `out` must be valid pointers.
 */
enum IpStatus ip_engine_remaining_mah(const struct IpEngine *engine, double *out);

/**
 * Applies one protocol line and stores the reply line in `*reply`, which
 * the caller frees with `ip_string_free`. Returns
 * `IP_STATUS_COMMAND_REJECTED` for `ERR` replies.
 *
 * # Safety
 * `engine` and `reply` must be valid pointers; `line` NUL-terminated.
 */
enum IpStatus ip_engine_handle_line(struct IpEngine *engine, const char *line, char **reply);

/**
 * The event log as a JSON array, freed with `ip_string_free`.
 *
 * # Safety
 * `engine` and `out` must be valid pointers.
 */
enum IpStatus ip_engine_event_log_json(const struct IpEngine *engine, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void ip_string_free(char *s);

/**
 * Message for the last failure on this thread; empty if none. Owned by the
 * library.
 */
const char *ip_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IDLEPOWER_H */
