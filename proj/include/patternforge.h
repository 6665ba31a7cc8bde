#ifndef PATTERNFORGE_H
#define PATTERNFORGE_H

/* C interface to the patternforge pipeline.
 *
 * Every function that can fail returns an error code from the enum below;
 * the message behind a failure is retrievable with pf_pipeline_last_error
 * until the next call on the same handle. Strings handed back through
 * char** out parameters are heap-allocated copies; release them with
 * pf_string_free. Handles are not thread-safe; use one per thread.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
    PF_OK = 0,
    PF_ERR_INVALID = 1,  /* bad argument: unknown key, stage, or value */
    PF_ERR_IO = 2,       /* a file could not be read, parsed, or written */
    PF_ERR_STATE = 3,    /* missing or stale upstream artifact */
    PF_ERR_INTERNAL = 4  /* computation failed; see last_error */
};

typedef struct pf_pipeline pf_pipeline;

/* Library version, e.g. "0.1.0". Static storage, do not free. */
const char* pf_version(void);

/* Stage names in execution order, for validating --stage arguments or
 * iterating a full run. pf_stage_name returns NULL once index reaches
 * pf_stage_count(). Static storage, do not free. */
size_t pf_stage_count(void);
const char* pf_stage_name(size_t index);

/* A handle wraps one pipeline configuration, starting from built-in
 * defaults. Returns NULL only when allocation fails. */
pf_pipeline* pf_pipeline_create(void);
void pf_pipeline_destroy(pf_pipeline* p);

/* Replace the handle's configuration with the parsed file. */
int pf_pipeline_load_config(pf_pipeline* p, const char* path);

/* Set one dotted config key, e.g. ("simpc.delta", "2.3"). Values use the
 * same syntax as one line of the config file. */
int pf_pipeline_set_option(pf_pipeline* p, const char* key, const char* value);

/* Serialize the current configuration in the config file format. */
int pf_pipeline_emit_config(pf_pipeline* p, char** out);

/* 16-hex-digit hash over the result-affecting configuration keys; this is
 * the hash stamped into every artifact. */
int pf_pipeline_config_hash(pf_pipeline* p, char** out);

/* Run one named stage, or all stages in order. Artifacts land in the
 * configured output directory; a stage whose inputs are missing or were
 * built under a different config hash or seed fails with PF_ERR_STATE. */
int pf_pipeline_run_stage(pf_pipeline* p, const char* stage);
int pf_pipeline_run_all(pf_pipeline* p);

/* Filesystem path where the stage's artifact is written. */
int pf_pipeline_artifact_path(pf_pipeline* p, const char* stage, char** out);

/* JSON text of a stage's artifact as written by the last run. */
int pf_pipeline_artifact_json(pf_pipeline* p, const char* stage, char** out);

/* Generate the synthetic OHLCV dataset described by the synth.* keys. */
int pf_pipeline_write_synth(pf_pipeline* p, const char* csv_path);

/* Message from the most recent failing call on this handle, or an empty
 * string when the last call succeeded. Never NULL. The pointer is valid
 * until the next call on the handle. */
const char* pf_pipeline_last_error(const pf_pipeline* p);

/* Free a string returned through a char** out parameter. NULL is a no-op. */
void pf_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
