#ifndef AGE_FFI_H
#define AGE_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum AgeStatus {
  AGE_STATUS_OK = 0,
  AGE_STATUS_NULL_POINTER = 1,
  AGE_STATUS_INPUT_DOMAIN = 2,
  AGE_STATUS_NUMERIC = 3,
  AGE_STATUS_CONTRACT = 4,
  AGE_STATUS_PARSE = 5,
  AGE_STATUS_CONFIG = 6,
  AGE_STATUS_IO = 7,
  AGE_STATUS_INVALID_UTF8 = 8,
  AGE_STATUS_BUFFER_TOO_SMALL = 9,
  AGE_STATUS_PANIC = 10,
} AgeStatus;

/**
 * Opaque policy agent with its own models and counters.
 */
typedef struct AgeAgent AgeAgent;

/**
 * Opaque CTR network.
 */
typedef struct AgeNetwork AgeNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread; empty if none. The
 * pointer stays valid until the next failing call on this thread.
 */
const char *age_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *age_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void age_string_free(char *s);

/**
 * Creates a randomly initialised network from a JSON network spec.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be writable.
 */
enum AgeStatus age_network_new(const char *spec_json, uint64_t seed, struct AgeNetwork **out);

/**
 * Loads a network checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AgeStatus age_network_load(const char *path, struct AgeNetwork **out);

/**
 * Writes a network checkpoint.
 *
 * # Safety
 * `net` must be a live handle; `path` a NUL-terminated string.
 */
enum AgeStatus age_network_save(const struct AgeNetwork *net, const char *path);

/**
 * # Safety
 * `net` must be null or a handle from this library, freed at most once.
 */
void age_network_free(struct AgeNetwork *net);

/**
 * Width of the concatenated input embedding.
 *
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
enum AgeStatus age_network_input_width(const struct AgeNetwork *net, size_t *out);

/**
 * Click probability for a user/arm pair, without dropout.
 *
 * # Safety
 * `user` must point to `user_len` indices; `out` must be writable.
 */
enum AgeStatus age_network_predict(const struct AgeNetwork *net,
                                   const uint32_t *user,
                                   size_t user_len,
                                   uint32_t arm,
                                   double *out);

/**
 * Gradient of the prediction with respect to the input embedding,
 * written to `out[0..out_len]`; `out_len` must equal the input width.
 *
 * # Safety
 * `user` must point to `user_len` indices; `out` to `out_len` doubles.
 */
enum AgeStatus age_network_input_gradient(const struct AgeNetwork *net,
                                          const uint32_t *user,
                                          size_t user_len,
                                          uint32_t arm,
                                          double *out,
                                          size_t out_len);

/**
 * Creates an agent with freshly initialised models.
 *
 * # Safety
 * JSON arguments must be NUL-terminated strings; `out` must be writable.
 */
enum AgeStatus age_agent_new(const char *policy_json,
                             const char *model_json,
                             uint64_t seed,
                             struct AgeAgent **out);

/**
 * Creates an agent warm-started on the head of a JSON-lines log.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum AgeStatus age_agent_new_warm(const char *policy_json,
                                  const char *model_json,
                                  const char *warm_json,
                                  const char *log_path,
                                  uint64_t seed,
                                  struct AgeAgent **out);

/**
 * # Safety
 * `agent` must be null or a handle from this library, freed at most once.
 */
void age_agent_free(struct AgeAgent *agent);

/**
 * Picks an arm from `pool`. `seed` keys the random draws of this call.
 *
 * # Safety
 * Array arguments must point to the given number of elements; output
 * pointers must be writable (`out_predicted` may be null).
 */
enum AgeStatus age_agent_select(struct AgeAgent *agent,
                                const uint32_t *user,
                                size_t user_len,
                                const uint32_t *pool,
                                size_t pool_len,
                                uint64_t seed,
                                uint32_t *out_arm,
                                double *out_predicted);

/**
 * Feeds back a displayed arm and its click (0 or 1).
 *
 * # Safety
 * `user` must point to `user_len` indices.
 */
enum AgeStatus age_agent_update(struct AgeAgent *agent,
                                const uint32_t *user,
                                size_t user_len,
                                uint32_t arm,
                                uint8_t click,
                                uint64_t seed);

/**
 * Hex SHA-256 of the agent's mutable state; free with `age_string_free`.
 *
 * # Safety
 * `agent` must be a live handle; `out` must be writable.
 */
enum AgeStatus age_agent_state_digest(const struct AgeAgent *agent, char **out);

/**
 * Copies the agent's primary network into a new handle.
 *
 * # Safety
 * `agent` must be a live handle; `out` must be writable.
 */
enum AgeStatus age_agent_network(const struct AgeAgent *agent, struct AgeNetwork **out);

/**
 * Validates an experiment config. On success `out` receives a JSON array
 * of `{path, message}` diagnostics (empty when valid).
 *
 * # Safety
 * `config_json` must be NUL-terminated; `out` must be writable.
 */
enum AgeStatus age_validate_config(const char *config_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGE_FFI_H */
