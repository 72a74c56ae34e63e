#ifndef UQGROUP_H
#define UQGROUP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum UqgStatus {
  UQG_STATUS_OK = 0,
  UQG_STATUS_NULL_POINTER = 1,
  UQG_STATUS_INVALID_UTF8 = 2,
  UQG_STATUS_CONFIG = 3,
  UQG_STATUS_DOMAIN = 4,
  UQG_STATUS_NUMERICAL = 5,
  UQG_STATUS_IO = 6,
  UQG_STATUS_JSON = 7,
  UQG_STATUS_NOT_FOUND = 8,
  UQG_STATUS_PANIC = 9,
} UqgStatus;

typedef enum UqgStopReason {
  UQG_STOP_REASON_TOLERANCE_MET = 0,
  UQG_STOP_REASON_BUDGET_EXHAUSTED = 1,
  UQG_STOP_REASON_ABORTED = 2,
} UqgStopReason;

/**
 * Opaque result of an adaptive run.
 */
typedef struct UqgReport UqgReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *uqg_version(void);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length excluding the NUL, or
 * 0 if there is no error. `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
uintptr_t uqg_last_error_message(char *buf, uintptr_t cap);

/**
 * Run the adaptive loop for a JSON configuration. On success `*out` owns a
 * new report; on failure it is set to null. A failed solve is not an error:
 * the report carries stop reason `ABORTED` and the levels completed so far.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum UqgStatus uqg_run_json(const char *config_json, struct UqgReport **out);

/**
 * Release a report. Null is ignored.
 *
 * # Safety
 * `report` must be null or come from [`uqg_run_json`] and not be used again.
 */
void uqg_report_free(struct UqgReport *report);

/**
 * # Safety
 * `report` and `out` must be valid pointers.
 */
enum UqgStatus uqg_report_stop_reason(const struct UqgReport *report, enum UqgStopReason *out);

/**
 * Number of samples evaluated.
 *
 * # Safety
 * `report` and `out` must be valid pointers.
 */
enum UqgStatus uqg_report_n_samples(const struct UqgReport *report, uintptr_t *out);

/**
 * Number of grid levels processed.
 *
 * # Safety
 * `report` and `out` must be valid pointers.
 */
enum UqgStatus uqg_report_n_levels(const struct UqgReport *report, uintptr_t *out);

/**
 * Mean of the QoI surrogate. `NOT_FOUND` if no level completed.
 *
 * # Safety
 * `report` and `out` must be valid pointers.
 */
enum UqgStatus uqg_report_qoi_mean(const struct UqgReport *report, double *out);

/**
 * Total `R` for a strategy tag (`"nat"`, `"par"`, `"sur"`, `"its"`) and
 * ensemble size. `NOT_FOUND` if that pair was not requested.
 *
 * # Safety
 * `report` and `out` must be valid pointers, `strategy` NUL-terminated.
 */
enum UqgStatus uqg_report_r(const struct UqgReport *report,
                            const char *strategy,
                            uintptr_t ensemble_size,
                            double *out);

/**
 * Write the CSV and JSON reports into `out_dir` (created if missing).
 *
 * # Safety
 * `report` must be valid, `out_dir` NUL-terminated.
 */
enum UqgStatus uqg_report_write(const struct UqgReport *report, const char *out_dir);

/**
 * Serialize the full report as JSON. `*out` receives a string to release
 * with [`uqg_string_free`].
 *
 * # Safety
 * `report` and `out` must be valid pointers.
 */
enum UqgStatus uqg_report_to_json(const struct UqgReport *report, char **out);

/**
 * # Safety
 * `s` must be null or come from this library and not be used again.
 */
void uqg_string_free(char *s);

/**
 * Group `n` iteration counts into ensembles of `ensemble_size` and return
 * the ratio of padded ensemble cost to total iterations. With `sorted` the
 * counts are grouped in ascending order, otherwise in the given order.
 *
 * # Safety
 * `iterations` must point to `n` readable values and `out` be valid.
 */
enum UqgStatus uqg_grouping_r(const double *iterations,
                              uintptr_t n,
                              uintptr_t ensemble_size,
                              bool sorted,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UQGROUP_H */
