#ifndef LEADONE_H
#define LEADONE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LeadoneStatus {
  LEADONE_STATUS_OK = 0,
  LEADONE_STATUS_NULL_POINTER = 1,
  LEADONE_STATUS_INVALID_ARGUMENT = 2,
  LEADONE_STATUS_IO = 3,
  LEADONE_STATUS_PARSE = 4,
  LEADONE_STATUS_MODEL = 5,
  LEADONE_STATUS_NUMERIC = 6,
  LEADONE_STATUS_AUTH = 7,
  LEADONE_STATUS_NOT_FOUND = 8,
  LEADONE_STATUS_CONFLICT = 9,
  LEADONE_STATUS_UNDEFINED = 10,
  LEADONE_STATUS_PANIC = 99,
} LeadoneStatus;

typedef enum LeadoneLabel {
  LEADONE_LABEL_AFIB = 0,
  LEADONE_LABEL_NSR = 1,
  LEADONE_LABEL_OTHER = 2,
  LEADONE_LABEL_NOT_SURE = 3,
  LEADONE_LABEL_NOISE = 4,
} LeadoneLabel;

typedef enum LeadoneKappaBand {
  LEADONE_KAPPA_BAND_NONE = 0,
  LEADONE_KAPPA_BAND_SLIGHT = 1,
  LEADONE_KAPPA_BAND_FAIR = 2,
  LEADONE_KAPPA_BAND_MODERATE = 3,
  LEADONE_KAPPA_BAND_SUBSTANTIAL = 4,
  LEADONE_KAPPA_BAND_ALMOST_PERFECT = 5,
} LeadoneKappaBand;

/**
 * A loaded checkpoint and its preprocessing pipeline.
 */
typedef struct LeadoneModel LeadoneModel;

/**
 * Study logs under one data directory.
 */
typedef struct LeadoneStudyService LeadoneStudyService;

typedef struct LeadonePrediction {
  /**
   * NSR, AFIB, OTHER, NOISE.
   */
  double probabilities[4];
  enum LeadoneLabel predicted;
} LeadonePrediction;

typedef struct LeadoneKappa {
  double kappa;
  double pr_a;
  double pr_e;
  double se;
  double ci_low;
  double ci_high;
  /**
   * NaN when the standard error is 0.
   */
  double p_value;
  enum LeadoneKappaBand band;
  uint64_t n;
} LeadoneKappa;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *leadone_version(void);

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *leadone_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void leadone_string_free(char *s);

/**
 * Loads a checkpoint from an in-memory buffer.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `out` must be writable.
 */
enum LeadoneStatus leadone_model_from_bytes(const uint8_t *bytes,
                                            size_t len,
                                            struct LeadoneModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum LeadoneStatus leadone_model_load(const char *path, struct LeadoneModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, freed once.
 */
void leadone_model_free(struct LeadoneModel *model);

/**
 * Model version string, owned by the handle; null for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
const char *leadone_model_version(const struct LeadoneModel *model);

/**
 * Classifies one lead-I segment of 10–30 s given in microvolts.
 *
 * # Safety
 * `model` must be a live handle, `samples_uv` must point to `n` doubles and
 * `out` must be writable.
 */
enum LeadoneStatus leadone_model_predict(const struct LeadoneModel *model,
                                         const double *samples_uv,
                                         size_t n,
                                         double sampling_rate_hz,
                                         struct LeadonePrediction *out);

/**
 * Harmonic mean of precision and recall; `LEADONE_STATUS_UNDEFINED` when both are 0.
 *
 * # Safety
 * `out` must be writable.
 */
enum LeadoneStatus leadone_f1_score(double precision, double recall, double *out);

/**
 * `kappa ± 1.96·se`, clamped to [-1, 1].
 *
 * # Safety
 * `low` and `high` must be writable.
 */
enum LeadoneStatus leadone_kappa_interval(double kappa, double se, double *low, double *high);

/**
 * Cohen's kappa of two aligned label-code arrays.
 *
 * # Safety
 * `reference` and `other` must point to `n` ints; `out` must be writable.
 */
enum LeadoneStatus leadone_cohen_kappa(const int32_t *reference,
                                       const int32_t *other,
                                       size_t n,
                                       struct LeadoneKappa *out);

/**
 * Trapezoidal ROC AUC of a binary problem (`positives[i] != 0`).
 *
 * # Safety
 * `scores` and `positives` must point to `n` elements; `out` must be writable.
 */
enum LeadoneStatus leadone_roc_auc(const double *scores,
                                   const uint8_t *positives,
                                   size_t n,
                                   double *out);

/**
 * Opens (creating if needed) the study store under `data_dir`.
 *
 * # Safety
 * `data_dir` must be a nul-terminated string; `out` must be writable.
 */
enum LeadoneStatus leadone_study_open(const char *data_dir, struct LeadoneStudyService **out);

/**
 * # Safety
 * `service` must be null or a handle from this library, freed once.
 */
void leadone_study_free(struct LeadoneStudyService *service);

/**
 * Commits one rater answer (`AFIB`, `NSR`, `OTHER` or `NOT-SURE`).
 *
 * # Safety
 * `service` must be a live handle and every string nul-terminated.
 */
enum LeadoneStatus leadone_study_submit(struct LeadoneStudyService *service,
                                        const char *study_id,
                                        const char *rater_token,
                                        const char *item_id,
                                        const char *label);

/**
 * Agreement report as JSON (`markdown == 0`) or markdown tables.
 *
 * # Safety
 * `service` must be a live handle, strings nul-terminated and `out`
 * writable; free the result with [`leadone_string_free`].
 */
enum LeadoneStatus leadone_study_report(const struct LeadoneStudyService *service,
                                        const char *study_id,
                                        const char *admin_token,
                                        int32_t markdown,
                                        char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEADONE_H */
