#ifndef FAULTSCOPE_H
#define FAULTSCOPE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  FS_STATUS_NULL_ARGUMENT = 1,
  FS_STATUS_INVALID_UTF8 = 2,
  FS_STATUS_CONFIG = 3,
  FS_STATUS_CAMPAIGN = 4,
  FS_STATUS_EMULATOR = 5,
  FS_STATUS_OUT_OF_RANGE = 6,
  FS_STATUS_PANIC = 7,
} FsStatus;

/**
 * Verdict of a single run, mirroring the campaign classification.
 */
typedef enum FsVerdict {
  FS_VERDICT_EXPLOITABLE = 0,
  FS_VERDICT_ORACLE_REJECTED = 1,
  FS_VERDICT_TIMEOUT = 2,
  FS_VERDICT_INVALID_ASSEMBLY = 3,
  FS_VERDICT_MEMORY_ERROR = 4,
  FS_VERDICT_HARD_FAULT = 5,
} FsVerdict;

/**
 * A loaded campaign: start state, models, oracle and limits.
 */
typedef struct FsConfig FsConfig;

/**
 * A stand-alone emulator at a campaign's start state.
 */
typedef struct FsEmulator FsEmulator;

/**
 * The result of `fs_campaign_run`.
 */
typedef struct FsReport FsReport;

/**
 * Campaign counters.
 */
typedef struct FsCounters {
  uint64_t sequences;
  uint64_t points;
  uint64_t instantiations;
  uint64_t runs;
  uint64_t dry_runs;
  uint64_t pruned;
  uint64_t exploitable;
  uint64_t oracle_rejected;
  uint64_t timeouts;
  uint64_t invalid_assembly;
  uint64_t memory_errors;
  uint64_t hard_faults;
} FsCounters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *fs_last_error(void);

/**
 * Library version as a static string.
 */
const char *fs_version(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void fs_string_free(char *s);

/**
 * Loads a JSON campaign file; relative paths resolve against its folder.
 *
 * # Safety
 * `path` must be a valid C string and `out` a writable pointer.
 */
enum FsStatus fs_config_load(const char *path, struct FsConfig **out);

/**
 * # Safety
 * `cfg` must come from `fs_config_load` and not be freed twice.
 */
void fs_config_free(struct FsConfig *cfg);

/**
 * Replaces the fault models: a preset name or comma-separated model ids.
 *
 * # Safety
 * `cfg` must be a live handle and `selection` a valid C string.
 */
enum FsStatus fs_config_set_models(struct FsConfig *cfg, const char *selection);

/**
 * Sets the highest fault order (at least 1).
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum FsStatus fs_config_set_max_order(struct FsConfig *cfg, size_t max_order);

/**
 * Sets the worker thread count (at least 1).
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum FsStatus fs_config_set_workers(struct FsConfig *cfg, size_t workers);

/**
 * Sets the instruction budget per run.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum FsStatus fs_config_set_timeout(struct FsConfig *cfg, uint64_t timeout);

/**
 * Runs the fault-free program from the start state and classifies it.
 *
 * # Safety
 * `cfg` must be a live handle; `verdict` and `instructions` writable.
 */
enum FsStatus fs_config_reference_run(const struct FsConfig *cfg,
                                      enum FsVerdict *verdict,
                                      uint64_t *instructions);

/**
 * Runs the campaign. The report is released with `fs_report_free`.
 *
 * # Safety
 * `cfg` must be a live handle and `out` writable.
 */
enum FsStatus fs_campaign_run(const struct FsConfig *cfg, struct FsReport **out);

/**
 * # Safety
 * `report` must come from `fs_campaign_run` and not be freed twice.
 */
void fs_report_free(struct FsReport *report);

/**
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum FsStatus fs_report_counters(const struct FsReport *report, struct FsCounters *out);

/**
 * Number of exploitable combinations.
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum FsStatus fs_report_exploitable_count(const struct FsReport *report, size_t *out);

/**
 * The full report as JSON. Free the string with `fs_string_free`.
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum FsStatus fs_report_to_json(const struct FsReport *report, char **out);

/**
 * An emulator at the campaign start state, stopping at its halting points.
 *
 * # Safety
 * `cfg` must be a live handle and `out` writable.
 */
enum FsStatus fs_emulator_new(const struct FsConfig *cfg, struct FsEmulator **out);

/**
 * # Safety
 * `emu` must come from `fs_emulator_new` and not be freed twice.
 */
void fs_emulator_free(struct FsEmulator *emu);

/**
 * Executes one instruction. Emulator errors return `FsStatus::Emulator`.
 *
 * # Safety
 * `emu` must be a live handle.
 */
enum FsStatus fs_emulator_step(struct FsEmulator *emu);

/**
 * Runs up to `budget` instructions. `halted` is set when a halting point
 * was reached.
 *
 * # Safety
 * `emu` must be a live handle and `halted` writable.
 */
enum FsStatus fs_emulator_run(struct FsEmulator *emu, uint64_t budget, bool *halted);

/**
 * Reads register `index` (0-15 for R0-R15, 16 for xPSR).
 *
 * # Safety
 * `emu` must be a live handle and `out` writable.
 */
enum FsStatus fs_emulator_reg(const struct FsEmulator *emu, uint32_t index, uint32_t *out);

/**
 * Writes register `index` (0-15).
 *
 * # Safety
 * `emu` must be a live handle.
 */
enum FsStatus fs_emulator_set_reg(struct FsEmulator *emu, uint32_t index, uint32_t value);

/**
 * Instructions retired since the emulator was created from reset.
 *
 * # Safety
 * `emu` must be a live handle and `out` writable.
 */
enum FsStatus fs_emulator_instr_count(const struct FsEmulator *emu, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAULTSCOPE_H */
