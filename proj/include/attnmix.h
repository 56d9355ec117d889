/*
 * attnmix - session-based recommendation toolkit with a multi-level
 * attention-mixture readout.
 *
 * C API over the core library: opaque handles, integer status codes, and
 * JSON text for structured payloads. Strings returned through char** are
 * heap-allocated; release them with am_string_free. Error details for the
 * last failing call on this thread are available via am_last_error.
 */
#ifndef ATTNMIX_H
#define ATTNMIX_H

#include <stddef.h>

#if defined(_WIN32)
#define AM_API __declspec(dllexport)
#else
#define AM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum am_status {
    AM_OK = 0,
    AM_ERR_INVALID_ARGUMENT = 1,
    AM_ERR_DEGENERATE_NORM = 2,
    AM_ERR_INVALID_P = 3,
    AM_ERR_NONFINITE_INPUT = 4,
    AM_ERR_NONFINITE_GRADIENT = 5,
    AM_ERR_NONFINITE_UPDATE = 6,
    AM_ERR_PARSE = 7,
    AM_ERR_EMPTY_INPUT = 8,
    AM_ERR_EMPTY_AFTER_FILTER = 9,
    AM_ERR_INVALID_RULE = 10,
    AM_ERR_INVALID_TARGET = 11,
    AM_ERR_EMPTY_RANKS = 12,
    AM_ERR_VERSION_MISMATCH = 13,
    AM_ERR_CORRUPT_CHECKPOINT = 14,
    AM_ERR_VOCABULARY_MISMATCH = 15,
    AM_ERR_UNKNOWN_ITEM = 16,
    AM_ERR_INVALID_CONFIG = 17,
    AM_ERR_IO = 18,
    AM_ERR_INTERNAL = 19
} am_status;

/* Opaque handles. */
typedef struct am_dataset am_dataset; /* prepared dataset (vocabulary + splits) */
typedef struct am_model am_model;     /* loaded checkpoint */

AM_API unsigned am_abi_version(void);
AM_API const char* am_status_name(am_status s);

/* Message for the last failing call on the current thread ("" when none). */
AM_API const char* am_last_error(void);

AM_API void am_string_free(char* s);

/*
 * Merges defaults <- config_json <- overrides_json (both optional), rejects
 * unknown keys, validates ranges and returns the fully resolved document.
 */
AM_API am_status am_config_resolve(const char* config_json, const char* overrides_json,
                                   char** out_effective_json);

/*
 * Runs load -> (sessionize) -> filter -> split -> augment per the config's
 * data section, writes the dataset cache and returns a summary document
 * (clicks / sessions / items / avg_length plus per-split detail).
 */
AM_API am_status am_prep(const char* effective_config_json, const char* out_cache_path,
                         char** out_summary_json);

AM_API am_status am_dataset_open(const char* cache_path, am_dataset** out);
AM_API void am_dataset_close(am_dataset* ds);
AM_API am_status am_dataset_summary(const am_dataset* ds, char** out_json);

/*
 * Trains per the config's model/train sections, writes the best checkpoint
 * and an append-only epoch log, and returns a result document.
 */
AM_API am_status am_train(const am_dataset* ds, const char* effective_config_json,
                          const char* out_checkpoint_path, const char* out_log_path,
                          char** out_result_json);

AM_API am_status am_model_open(const char* checkpoint_path, am_model** out);
AM_API void am_model_close(am_model* m);
AM_API am_status am_model_info(const am_model* m, char** out_json);

/*
 * Ranks the dataset's test split under the frozen model. Fails with
 * AM_ERR_VOCABULARY_MISMATCH when the checkpoint digest does not match the
 * cache.
 */
AM_API am_status am_evaluate(const am_model* m, const am_dataset* ds,
                             const char* effective_config_json, char** out_report_json);

/*
 * Scores one session of external item ids and returns the top-k items with
 * probabilities as a JSON array. Unknown ids fail with AM_ERR_UNKNOWN_ITEM,
 * listing the offenders in am_last_error.
 */
AM_API am_status am_recommend(const am_model* m, const am_dataset* ds, const char* const* item_ids,
                              size_t n_items, size_t topk, char** out_json);

/*
 * Sparsity probe: trains with the probed weights variational and a KL term
 * weighted by probe.lambda, returning one "epoch= name= M= N= threshold=
 * rho=" line per (epoch, matrix).
 */
AM_API am_status am_probe(const am_dataset* ds, const char* effective_config_json,
                          char** out_series_text);

#ifdef __cplusplus
}
#endif

#endif /* ATTNMIX_H */
