#ifndef LOADCAST_H
#define LOADCAST_H

/* Generated by cbindgen from the loadcast-ffi crate. Do not edit by hand; rebuild the crate to refresh. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call. Anything other than `Ok` leaves a
 * message retrievable through [`lc_last_error_message`].
 */
typedef enum LcStatus {
  /**
   * The call succeeded.
   */
  LC_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  LC_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  LC_STATUS_INVALID_UTF8 = 2,
  /**
   * The file could not be read.
   */
  LC_STATUS_IO = 3,
  /**
   * The file was read but is not a valid model document.
   */
  LC_STATUS_PARSE = 4,
  /**
   * An array argument had the wrong dimensions for this model.
   */
  LC_STATUS_SHAPE = 5,
  /**
   * An argument value was outside the valid domain.
   */
  LC_STATUS_DOMAIN = 6,
  /**
   * A text output buffer was too small for the value plus its NUL.
   */
  LC_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * An unexpected internal failure; the message has details.
   */
  LC_STATUS_INTERNAL = 8,
} LcStatus;

/**
 * Opaque handle to a loaded model document (trained estimator plus its
 * fitted feature pipeline).
 */
typedef struct LcModel LcModel;

/**
 * Shape summary of a loaded model, filled in by [`lc_model_info`].
 */
typedef struct LcModelInfo {
  /**
   * Years per input window.
   */
  size_t n_steps;
  /**
   * Values per raw (pre-pipeline) step row.
   */
  size_t raw_width;
  /**
   * Values per engineered step row after normalization and component
   * reduction.
   */
  size_t engineered_width;
  /**
   * Total trainable parameter count of the estimator.
   */
  size_t parameter_count;
  /**
   * 1 for a recurrent sequence model, 0 for a feed-forward baseline.
   */
  uint8_t sequence_model;
} LcModelInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or an empty
 * string when nothing failed yet. The pointer stays valid until this
 * thread's next loadcast call.
 */
const char *lc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lc_version(void);

/**
 * Loads a model document from `path` (NUL-terminated UTF-8) and stores the
 * new handle in `*out`. On any failure `*out` is left untouched.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer.
 */
enum LcStatus lc_model_load(const char *path, struct LcModel **out);

/**
 * Releases a handle from [`lc_model_load`]. Passing null is a no-op.
 *
 * # Safety
 * `model` must be a pointer previously returned by [`lc_model_load`] that
 * has not been freed, or null.
 */
void lc_model_free(struct LcModel *model);

/**
 * Fills `*info` with the model's shape summary.
 *
 * # Safety
 * `model` must be a live handle and `info` writable storage for one
 * [`LcModelInfo`].
 */
enum LcStatus lc_model_info(const struct LcModel *model, struct LcModelInfo *info);

/**
 * Writes the model's label (for example `gru-many-to-one`) into `buf`.
 *
 * # Safety
 * `model` must be a live handle and `buf` writable for `cap` bytes.
 */
enum LcStatus lc_model_label(const struct LcModel *model, char *buf, size_t cap);

/**
 * Writes the name of raw input column `index` into `buf`. Iterating from 0
 * to `raw_width - 1` (see [`lc_model_info`]) yields the exact value order
 * expected in each row passed to [`lc_predict`].
 *
 * # Safety
 * `model` must be a live handle and `buf` writable for `cap` bytes.
 */
enum LcStatus lc_model_column_name(const struct LcModel *model,
                                   size_t index,
                                   char *buf,
                                   size_t cap);

/**
 * Predicts the next-year peak (amperes) from one raw feature window.
 *
 * `raw_steps` is a row-major `n_steps x raw_width` matrix: one row per
 * input year, oldest first, each row in the column order reported by
 * [`lc_model_column_name`]. Both dimensions must match the loaded model;
 * the embedded pipeline handles normalization and component reduction.
 *
 * # Safety
 * `model` must be a live handle, `raw_steps` readable for
 * `n_steps * raw_width` doubles, and `out_amperes` writable for one double.
 */
enum LcStatus lc_predict(const struct LcModel *model,
                         const double *raw_steps,
                         size_t n_steps,
                         size_t raw_width,
                         double *out_amperes);

/**
 * Mean absolute percentage error of `forecasts` against `actuals`, in
 * percent. Actuals must be strictly positive and everything finite.
 *
 * # Safety
 * `actuals` and `forecasts` must be readable for `len` doubles and
 * `out_mape` writable for one double.
 */
enum LcStatus lc_mape(const double *actuals, const double *forecasts, size_t len, double *out_mape);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOADCAST_H */
