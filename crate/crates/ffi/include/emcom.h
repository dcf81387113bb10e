#ifndef EMCOM_H
#define EMCOM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EmcomStatus {
  EMCOM_STATUS_OK = 0,
  EMCOM_STATUS_NULL_POINTER = 1,
  EMCOM_STATUS_INVALID_UTF8 = 2,
  EMCOM_STATUS_CONTRACT = 3,
  EMCOM_STATUS_DOMAIN = 4,
  EMCOM_STATUS_CONFIG = 5,
  EMCOM_STATUS_SIZE_CAP = 6,
  EMCOM_STATUS_PROPERTY = 7,
  EMCOM_STATUS_NON_FINITE = 8,
  EMCOM_STATUS_IO = 9,
  EMCOM_STATUS_JSON = 10,
  EMCOM_STATUS_PANIC = 11,
} EmcomStatus;

// A naming game in progress.
typedef struct EmcomNamingGame EmcomNamingGame;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *emcom_last_error(void);

// Library version as a static NUL-terminated string.
const char *emcom_version(void);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void emcom_string_free(char *s);

// Creates a naming game from a JSON game config and a JSON dataset.
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum EmcomStatus emcom_naming_game_new(const char *config_json,
                                       const char *dataset_json,
                                       struct EmcomNamingGame **out);

// Plays `rounds` further rounds.
//
// # Safety
// `game` must be a live handle from [`emcom_naming_game_new`].
enum EmcomStatus emcom_naming_game_step(struct EmcomNamingGame *game, size_t rounds);

// Current per-agent signs as a JSON array of arrays.
//
// # Safety
// `game` must be a live handle; `out` must be writable.
enum EmcomStatus emcom_naming_game_signs(struct EmcomNamingGame *game, char **out);

// The trace so far as JSONL.
//
// # Safety
// `game` must be a live handle; `out` must be writable.
enum EmcomStatus emcom_naming_game_trace(struct EmcomNamingGame *game, char **out);

// # Safety
// `game` must be null or a live handle; it is invalid afterwards.
void emcom_naming_game_free(struct EmcomNamingGame *game);

// Runs an experiment file given as TOML text, writing its artifacts to the
// configured output directory. Returns `Property` when checks fail.
//
// # Safety
// `config_toml` must be a NUL-terminated string.
enum EmcomStatus emcom_run_experiment(const char *config_toml);

// Runs the oracle battery; `out` receives the JSON array of reports and
// `n_failed` the number of failing ones.
//
// # Safety
// `out` and `n_failed` must be writable.
enum EmcomStatus emcom_verify(char **out, size_t *n_failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMCOM_H */
