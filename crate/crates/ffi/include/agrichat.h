#ifndef AGRICHAT_H
#define AGRICHAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every call.
 */
typedef enum AgriStatus {
  AGRI_STATUS_OK = 0,
  AGRI_STATUS_NULL_ARGUMENT = 1,
  AGRI_STATUS_INVALID_UTF8 = 2,
  AGRI_STATUS_CONFIG = 3,
  AGRI_STATUS_STORE = 4,
  AGRI_STATUS_MALFORMED_FRAME = 5,
  AGRI_STATUS_DUPLICATE_EVENT = 6,
  AGRI_STATUS_PANIC = 7,
} AgriStatus;

/**
 * Opaque service handle.
 */
typedef struct AgriService AgriService;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a service.
 *
 * `config_path` and `data_dir` may be null: the built-in configuration is
 * used, and the logs are kept in memory. `seed` replaces the sim seed.
 * The simulated clock starts at `start_ts` (unix seconds).
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum AgriStatus agri_service_new(const char *config_path,
                                 const char *data_dir,
                                 uint64_t seed,
                                 int64_t start_ts,
                                 struct AgriService **out);

/**
 * Releases a service. Null is ignored.
 *
 * # Safety
 * `svc` must come from [`agri_service_new`] and not be used afterwards.
 */
void agri_service_free(struct AgriService *svc);

/**
 * Routes one inbound frame. On success `*out_frames` receives the reply
 * batch as newline-terminated outbound frames.
 *
 * # Safety
 * `svc` must be a live handle; `frame` NUL-terminated; `out_frames` writable.
 */
enum AgriStatus agri_service_route(struct AgriService *svc, const char *frame, char **out_frames);

/**
 * Advances the simulated clock by `ticks` ticks.
 *
 * # Safety
 * `svc` must be a live handle.
 */
enum AgriStatus agri_service_tick(struct AgriService *svc, uint64_t ticks);

/**
 * Connects `user_id` and drains its pushed messages into `*out_frames`
 * (possibly an empty string).
 *
 * # Safety
 * `svc` must be a live handle; `user_id` NUL-terminated; `out_frames` writable.
 */
enum AgriStatus agri_service_poll(struct AgriService *svc, const char *user_id, char **out_frames);

/**
 * Edit distance between two UTF-8 strings, counted in Unicode scalar values.
 *
 * # Safety
 * `a` and `b` must be NUL-terminated; `out` writable.
 */
enum AgriStatus agri_levenshtein(const char *a, const char *b, size_t *out);

/**
 * The calling thread's last error message, or null. Valid until the next
 * call into this library on the same thread.
 */
const char *agri_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void agri_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGRICHAT_H */
