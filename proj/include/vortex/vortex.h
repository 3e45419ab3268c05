#ifndef VORTEX_VORTEX_H
#define VORTEX_VORTEX_H

/* C interface to the vortex laboratory. Every call returns a vortex_status;
   on failure vortex_last_error() holds the message for the calling thread.
   Strings returned through char** are owned by the caller and released with
   vortex_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define VORTEX_API __declspec(dllexport)
#else
#define VORTEX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vortex_status {
  VORTEX_OK = 0,
  VORTEX_ERR_INPUT = 1,     /* validation error */
  VORTEX_ERR_NUMERICAL = 2, /* solver, quadrature or a failed invariant */
  VORTEX_ERR_IO = 3,
  VORTEX_ERR_INTERNAL = 4
} vortex_status;

typedef struct vortex_config vortex_config;
typedef struct vortex_state vortex_state;

/* stage, message, user data */
typedef void (*vortex_progress_fn)(const char*, const char*, void*);

VORTEX_API const char* vortex_version(void);
VORTEX_API const char* vortex_last_error(void);
VORTEX_API void vortex_string_free(char* s);

VORTEX_API size_t vortex_experiment_count(void);
/* NULL past the end */
VORTEX_API const char* vortex_experiment_name(size_t i);

/* ---- configuration ---- */

VORTEX_API vortex_status vortex_config_new(vortex_config** out);
VORTEX_API vortex_status vortex_config_parse(const char* json_text, vortex_config** out);
VORTEX_API vortex_status vortex_config_load(const char* path, vortex_config** out);
/* key is a dotted JSON path ("flow.rtol"); value is JSON, or a bare string */
VORTEX_API vortex_status vortex_config_set(vortex_config* cfg, const char* key, const char* value);
/* "key=value" */
VORTEX_API vortex_status vortex_config_set_assignment(vortex_config* cfg, const char* assignment);
/* Checks the cross-field invariants. */
VORTEX_API vortex_status vortex_config_validate(const vortex_config* cfg);
/* Fully populated configuration. */
VORTEX_API vortex_status vortex_config_to_json(const vortex_config* cfg, char** out);
VORTEX_API void vortex_config_free(vortex_config* cfg);

/* ---- runs ---- */

/* Runs the configured experiment. manifest_json (optional) receives the
   manifest text when one was written; exit_code (optional) receives the
   process exit code the run maps to (0 success, 1 validation, 2 numerical,
   3 I/O). The return value is VORTEX_OK only when the run succeeded. */
VORTEX_API vortex_status vortex_run(const vortex_config* cfg, vortex_progress_fn progress, void* user,
                                    char** manifest_json, int* exit_code);

/* ---- coefficient states ---- */

/* Zero state with modes |k| <= N at time t >= 1. */
VORTEX_API vortex_status vortex_state_new(int N, double t, vortex_state** out);
VORTEX_API vortex_status vortex_state_set(vortex_state* s, int k, double re, double im);
VORTEX_API vortex_status vortex_state_get(const vortex_state* s, int k, double* re, double* im);
VORTEX_API vortex_status vortex_state_modes(const vortex_state* s, int* N);
VORTEX_API vortex_status vortex_state_time(const vortex_state* s, double* t);
VORTEX_API vortex_status vortex_state_mass(const vortex_state* s, double* mass);
/* Integrates to t_target >= 1 (either direction). */
VORTEX_API vortex_status vortex_state_evolve(vortex_state* s, double t_target, double rtol, double atol);
VORTEX_API void vortex_state_free(vortex_state* s);

#ifdef __cplusplus
}
#endif

#endif
