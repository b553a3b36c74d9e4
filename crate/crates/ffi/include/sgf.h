#ifndef SGF_H
#define SGF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum SgfStatus {
  SgfStatus_Ok = 0,
  SgfStatus_NullArgument = 1,
  SgfStatus_ParseError = 2,
  SgfStatus_InvalidData = 3,
  SgfStatus_IllegalAction = 4,
  SgfStatus_RuntimeError = 5,
} SgfStatus;

/**
 * Opaque environment handle (netlist bound to a canvas).
 */
typedef struct SgfEnv SgfEnv;

/**
 * Opaque netlist handle.
 */
typedef struct SgfNetlist SgfNetlist;

/**
 * Opaque immutable placement-state handle.
 */
typedef struct SgfState SgfState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread. The pointer is
 * valid until the next failing call on the same thread. Never null.
 */
const char *sgf_last_error_message(void);

/**
 * Parse a canonical netlist JSON string into a new handle.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SgfStatus sgf_netlist_parse(const char *json, struct SgfNetlist **out);

/**
 * Release a netlist handle. Null is a no-op.
 *
 * # Safety
 * `netlist` must be null or a pointer from `sgf_netlist_parse`, released
 * at most once.
 */
void sgf_netlist_free(struct SgfNetlist *netlist);

/**
 * Number of modules in the netlist.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum SgfStatus sgf_netlist_module_count(const struct SgfNetlist *netlist, uintptr_t *out);

/**
 * Canonical JSON serialization of the netlist; free with `sgf_string_free`.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum SgfStatus sgf_netlist_to_json(const struct SgfNetlist *netlist, char **out);

/**
 * Hex content hash of the netlist; free with `sgf_string_free`.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum SgfStatus sgf_netlist_hash(const struct SgfNetlist *netlist, char **out);

/**
 * Release a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a string returned by this library, released at most
 * once.
 */
void sgf_string_free(char *s);

/**
 * Build an environment from a netlist and canvas dimensions. The netlist
 * handle remains owned by the caller.
 *
 * # Safety
 * `netlist` and `out` must be valid pointers.
 */
enum SgfStatus sgf_env_new(const struct SgfNetlist *netlist,
                           uintptr_t width,
                           uintptr_t height,
                           uintptr_t layers,
                           struct SgfEnv **out);

/**
 * Release an environment handle. Null is a no-op.
 *
 * # Safety
 * `env` must be null or a pointer from `sgf_env_new`, released at most
 * once.
 */
void sgf_env_free(struct SgfEnv *env);

/**
 * Fresh empty placement state.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum SgfStatus sgf_env_reset(const struct SgfEnv *env, struct SgfState **out);

/**
 * Release a state handle. Null is a no-op.
 *
 * # Safety
 * `state` must be null or a state pointer from this library, released at
 * most once.
 */
void sgf_state_free(struct SgfState *state);

/**
 * Place the next module at anchor (x, y, z). On success writes the next
 * state, the three-component reward (wirelength score, congestion penalty,
 * heat penalty), and the episode-done flag. The input state is unchanged.
 *
 * # Safety
 * All pointers must be valid; `reward` must point to at least 3 doubles.
 */
enum SgfStatus sgf_env_step(const struct SgfEnv *env,
                            const struct SgfState *state,
                            uintptr_t x,
                            uintptr_t y,
                            uintptr_t z,
                            struct SgfState **out_state,
                            double *reward,
                            bool *done);

/**
 * Number of legal anchors for the next module; 0 when the episode is done
 * or the placement is dead-ended.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SgfStatus sgf_env_legal_count(const struct SgfEnv *env,
                                   const struct SgfState *state,
                                   uintptr_t *out);

/**
 * Total weighted wirelength of the (partial) placement.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SgfStatus sgf_state_wirelength(const struct SgfState *state, double *out);

/**
 * Number of modules placed so far.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SgfStatus sgf_state_placed_count(const struct SgfState *state, uintptr_t *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SGF_H */
