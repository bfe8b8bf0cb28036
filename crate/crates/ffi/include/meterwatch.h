#ifndef METERWATCH_H
#define METERWATCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MwStatus {
  MW_STATUS_OK = 0,
  MW_STATUS_NULL_POINTER = 1,
  MW_STATUS_INVALID_ARGUMENT = 2,
  MW_STATUS_IO = 3,
  MW_STATUS_FORMAT = 4,
  MW_STATUS_DATA = 5,
  MW_STATUS_PANIC = 6,
} MwStatus;

/**
 * Trained submeter classifier.
 */
typedef struct MwClassifier MwClassifier;

/**
 * Trained residual-error predictor.
 */
typedef struct MwPredictor MwPredictor;

/**
 * Result of running detection over one area.
 */
typedef struct MwDetection {
  bool flagged;
  /**
   * Index into the predicted days, or -1.
   */
  int64_t start_index;
  /**
   * First alarm date as YYYYMMDD, or 0.
   */
  int32_t start_yyyymmdd;
  size_t n_days;
  /**
   * kWh per DPE unit.
   */
  double scale;
} MwDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *mw_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mw_version(void);

/**
 * Loads a predictor checkpoint written by `train-predictor`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MwStatus mw_predictor_load(const char *path, struct MwPredictor **out);

/**
 * # Safety
 * `handle` must come from `mw_predictor_load` and not be used afterwards.
 */
void mw_predictor_free(struct MwPredictor *handle);

/**
 * # Safety
 * `handle` must be live; `out` must be valid.
 */
enum MwStatus mw_predictor_window_size(const struct MwPredictor *handle, size_t *out);

/**
 * Predicts the residual error of one area stored as a usage CSV and runs
 * sliding-window detection with threshold `t` (standardized units) and
 * run length `l`.
 *
 * # Safety
 * `handle` must be live, `csv_path` NUL-terminated, `out` valid.
 */
enum MwStatus mw_predictor_detect_csv(const struct MwPredictor *handle,
                                      const char *csv_path,
                                      double t,
                                      size_t l,
                                      struct MwDetection *out);

/**
 * Loads a classifier checkpoint written by `train-classifier`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MwStatus mw_classifier_load(const char *path, struct MwClassifier **out);

/**
 * # Safety
 * `handle` must come from `mw_classifier_load` and not be used afterwards.
 */
void mw_classifier_free(struct MwClassifier *handle);

/**
 * Probability that a submeter is inaccurate, from its daily readings.
 * Only the last `series_len` values are used; shorter series are padded.
 *
 * # Safety
 * `handle` must be live, `values` must hold `len` doubles, `out` valid.
 */
enum MwStatus mw_classifier_score(const struct MwClassifier *handle,
                                  const double *values,
                                  size_t len,
                                  double *out);

/**
 * Left edge of the first run of `l` values strictly above `t`, or -1.
 *
 * # Safety
 * `dpe` must hold `len` doubles and `out_index` be valid.
 */
enum MwStatus mw_first_alarm(const double *dpe, size_t len, double t, size_t l, int64_t *out_index);

/**
 * ROC AUC with ties counted as one half. `labels` holds 0 or 1 per score.
 *
 * # Safety
 * `scores` and `labels` must hold `n` elements; `out` must be valid.
 */
enum MwStatus mw_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Writes the `len x len` recurrence plot of `series` row-major into `out`.
 * A negative `percentile` selects the grayscale plot.
 *
 * # Safety
 * `series` must hold `len` doubles and `out` room for `len * len`.
 */
enum MwStatus mw_recurrence_plot(const double *series, size_t len, double percentile, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METERWATCH_H */
