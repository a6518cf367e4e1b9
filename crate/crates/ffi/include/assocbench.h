#ifndef ASSOCBENCH_H
#define ASSOCBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum AbStatus {
  AB_STATUS_OK = 0,
  AB_STATUS_NULL_ARGUMENT = 1,
  AB_STATUS_INVALID_UTF8 = 2,
  AB_STATUS_IO = 3,
  AB_STATUS_INVALID_INPUT = 4,
  AB_STATUS_INFEASIBLE = 5,
  /**
   * A run finished but some rounds ended in transport failures.
   */
  AB_STATUS_TRANSPORT = 6,
  AB_STATUS_INTERNAL = 7,
  AB_STATUS_PANIC = 8,
} AbStatus;

/**
 * A loaded corpus.
 */
typedef struct AbCorpus AbCorpus;

/**
 * A finished chain round.
 */
typedef struct AbRound AbRound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Valid until the next
 * call into this library from the same thread; never null.
 */
const char *ab_last_error(void);

/**
 * Library version, a static string.
 */
const char *ab_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ab_string_free(char *s);

/**
 * Loads a corpus manifest.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum AbStatus ab_corpus_load(const char *path, struct AbCorpus **out);

/**
 * Number of accepted samples; 0 for a null handle.
 *
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t ab_corpus_len(const struct AbCorpus *corpus);

/**
 * # Safety
 * `corpus` must be null or a live handle; it is invalid afterwards.
 */
void ab_corpus_free(struct AbCorpus *corpus);

/**
 * Runs one synchronous chain round for `concept` against a Bernoulli oracle
 * that picks the correct option with probability `p_assoc` and always
 * deduces correctly. `strategy` is one of NoM, StructM, NLM, ChainM.
 *
 * # Safety
 * `corpus` must be a live handle, strings nul-terminated, `out` writable.
 */
enum AbStatus ab_run_oracle_chain(const struct AbCorpus *corpus,
                                  const char *concept,
                                  const char *strategy,
                                  size_t cap,
                                  uint64_t seed,
                                  double p_assoc,
                                  struct AbRound **out);

/**
 * Correct steps before termination; 0 for a null handle.
 *
 * # Safety
 * `round` must be null or a live handle.
 */
size_t ab_round_final_step_count(const struct AbRound *round);

/**
 * The round result as JSON.
 *
 * # Safety
 * `round` must be a live handle and `out` writable.
 */
enum AbStatus ab_round_to_json(const struct AbRound *round, char **out);

/**
 * # Safety
 * `round` must be null or a live handle; it is invalid afterwards.
 */
void ab_round_free(struct AbRound *round);

/**
 * Runs the experiment described by a TOML config file, writing logs and
 * reports to its output directory. On success or `AB_STATUS_TRANSPORT`,
 * `report_json` (if not null) receives the report.
 *
 * # Safety
 * `config_path` must be nul-terminated; `report_json` null or writable.
 */
enum AbStatus ab_run_config(const char *config_path, char **report_json);

/**
 * Recomputes the report (JSON) from a directory of round logs.
 *
 * # Safety
 * `logs_dir` must be nul-terminated and `out` writable.
 */
enum AbStatus ab_report_from_logs(const char *logs_dir, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASSOCBENCH_H */
