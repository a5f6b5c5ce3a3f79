#ifndef ADVNIDS_H
#define ADVNIDS_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum AdvnidsStatus {
  ADVNIDS_STATUS_OK = 0,
  ADVNIDS_STATUS_NULL_ARGUMENT = 1,
  ADVNIDS_STATUS_INVALID_UTF8 = 2,
  ADVNIDS_STATUS_CONFIG_ERROR = 3,
  ADVNIDS_STATUS_DATA_ERROR = 4,
  ADVNIDS_STATUS_NUMERICAL_ERROR = 5,
  ADVNIDS_STATUS_INTERNAL_ERROR = 6,
} AdvnidsStatus;

/**
 * Opaque handle around a loaded model and its inference context.
 */
typedef struct AdvnidsModel AdvnidsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message for this thread into `buf` (NUL
 * terminated, truncated to `len` bytes). Returns the full message length
 * in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null (query mode).
 */
uintptr_t advnids_last_error_message(char *buf, uintptr_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *advnids_version(void);

/**
 * Load a model file written by the `advnids` CLI. On success writes the
 * new handle through `out` and returns `Ok`; the handle must be released
 * with `advnids_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum AdvnidsStatus advnids_model_load(const char *path, struct AdvnidsModel **out);

/**
 * Release a handle returned by `advnids_model_load`. Null is a no-op.
 *
 * # Safety
 * `model` must be a handle from this library, released at most once.
 */
void advnids_model_free(struct AdvnidsModel *model);

/**
 * Number of input features the model expects.
 *
 * # Safety
 * `model` must be a live handle from this library.
 */
uintptr_t advnids_model_input_dim(const struct AdvnidsModel *model);

/**
 * Score `n_rows` row-major feature vectors through the full prediction
 * path. Writes attack probabilities to `out_scores` and 0/1 labels to
 * `out_labels`; either output may be null to skip it.
 *
 * # Safety
 * `features` must hold `n_rows * n_cols` doubles; non-null outputs must
 * hold `n_rows` elements.
 */
enum AdvnidsStatus advnids_predict(const struct AdvnidsModel *model,
                                   const double *features,
                                   uintptr_t n_rows,
                                   uintptr_t n_cols,
                                   double *out_scores,
                                   uint8_t *out_labels);

/**
 * One-step signed-gradient evasion against the loaded model. Writes the
 * perturbed rows (row-major, same shape as the input) to
 * `out_adversarial` and per-row success flags to `out_success` (may be
 * null).
 *
 * # Safety
 * `features` must hold `n_rows * n_cols` doubles, `labels` and
 * `out_success` `n_rows` bytes, `out_adversarial` `n_rows * n_cols`
 * doubles.
 */
enum AdvnidsStatus advnids_attack_fgsm(const struct AdvnidsModel *model,
                                       const double *features,
                                       const uint8_t *labels,
                                       uintptr_t n_rows,
                                       uintptr_t n_cols,
                                       double eps,
                                       double *out_adversarial,
                                       uint8_t *out_success);

/**
 * Iterated signed-gradient evasion (`max_iter` steps of `eps_step`,
 * projected back into the `eps` ball each step). Same memory contract as
 * `advnids_attack_fgsm`.
 *
 * # Safety
 * See `advnids_attack_fgsm`.
 */
enum AdvnidsStatus advnids_attack_pgd(const struct AdvnidsModel *model,
                                      const double *features,
                                      const uint8_t *labels,
                                      uintptr_t n_rows,
                                      uintptr_t n_cols,
                                      double eps,
                                      double eps_step,
                                      uintptr_t max_iter,
                                      double *out_adversarial,
                                      uint8_t *out_success);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADVNIDS_H */
