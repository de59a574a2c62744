#ifndef MBMF_H
#define MBMF_H

/* Generated by cbindgen from the mbmf-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MbmfStatus {
  MBMF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MBMF_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MBMF_STATUS_INVALID_UTF8 = 2,
  /**
   * File could not be read or written.
   */
  MBMF_STATUS_IO = 3,
  /**
   * Input data or a model file failed to parse or validate.
   */
  MBMF_STATUS_PARSE = 4,
  /**
   * Arguments violate a documented precondition.
   */
  MBMF_STATUS_INVALID_ARGUMENT = 5,
  /**
   * Training aborted on a non-finite or exploding objective.
   */
  MBMF_STATUS_DIVERGED = 6,
  /**
   * A row or column index is out of range.
   */
  MBMF_STATUS_OUT_OF_RANGE = 7,
  /**
   * An unexpected internal failure; the process state is still sound.
   */
  MBMF_STATUS_INTERNAL = 8,
} MbmfStatus;

/**
 * Opaque sparse observation matrix.
 */
typedef struct MbmfDataset MbmfDataset;

/**
 * Opaque trained model (factors, magnitudes, preprocessing record, labels).
 */
typedef struct MbmfModel MbmfModel;

/**
 * Training options; get defaults from [`mbmf_train_options_default`].
 */
typedef struct MbmfTrainOptions {
  /**
   * Latent dimension, at least 2.
   */
  size_t k;
  size_t max_iters;
  /**
   * Early-stop tolerance on the per-iteration objective decrease.
   */
  double tol;
  /**
   * Consecutive below-tolerance iterations before stopping.
   */
  size_t patience;
  /**
   * Initial step size for both angle matrices.
   */
  double learning_rate;
  double lr_grow;
  double lr_shrink;
  uint64_t seed;
} MbmfTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread. Never null.
 */
const char *mbmf_last_error_message(void);

/**
 * Default training options for latent dimension `k`.
 */
struct MbmfTrainOptions mbmf_train_options_default(size_t k);

/**
 * Loads a delimiter-separated `user,item,value` file into a dataset.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer.
 */
enum MbmfStatus mbmf_dataset_load(const char *path,
                                  char delimiter,
                                  bool has_header,
                                  struct MbmfDataset **out);

/**
 * Builds a dataset from parallel triplet arrays of length `len`. Row and
 * column labels are the decimal indices.
 *
 * # Safety
 * `rows`, `cols` and `values` must point to `len` readable elements each;
 * `out` must be writable.
 */
enum MbmfStatus mbmf_dataset_from_triplets(size_t n_rows,
                                           size_t n_cols,
                                           const size_t *rows,
                                           const size_t *cols,
                                           const double *values,
                                           size_t len,
                                           struct MbmfDataset **out);

/**
 * # Safety
 * `dataset` must be a live handle from this library or null.
 */
size_t mbmf_dataset_rows(const struct MbmfDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle from this library or null.
 */
size_t mbmf_dataset_cols(const struct MbmfDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle from this library or null.
 */
size_t mbmf_dataset_nnz(const struct MbmfDataset *dataset);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `dataset` must have come from this library and not been freed before.
 */
void mbmf_dataset_free(struct MbmfDataset *dataset);

/**
 * Trains on range-bounded data. With `nonnegative` true the data is shifted
 * by `min(r_min, 0)` and every product bounded by the shifted maximum; with
 * it false the data is centered by the range midpoint and bounded by the
 * half-width. Predictions from the model come back on the original scale.
 *
 * # Safety
 * All pointers must be valid; `out` must be writable.
 */
enum MbmfStatus mbmf_train_bounded(const struct MbmfDataset *dataset,
                                   const struct MbmfTrainOptions *options,
                                   bool nonnegative,
                                   double r_min,
                                   double r_max,
                                   struct MbmfModel **out);

/**
 * Trains with explicit per-row and per-column magnitudes and no
 * preprocessing: the data is taken as already centered or non-negative.
 *
 * # Safety
 * `r_w` must point to `r_w_len` readable values and `r_h` to `r_h_len`;
 * the other pointer rules match [`mbmf_train_bounded`].
 */
enum MbmfStatus mbmf_train_with_magnitudes(const struct MbmfDataset *dataset,
                                           const struct MbmfTrainOptions *options,
                                           const double *r_w,
                                           size_t r_w_len,
                                           const double *r_h,
                                           size_t r_h_len,
                                           struct MbmfModel **out);

/**
 * Predicts the cells `(rows[i], cols[i])`, writing `len` values to
 * `out_values`, de-centered to the original data scale when the model
 * carries a preprocessing record.
 *
 * # Safety
 * `rows` and `cols` must hold `len` readable indices and `out_values` room
 * for `len` doubles.
 */
enum MbmfStatus mbmf_model_predict(const struct MbmfModel *model,
                                   const size_t *rows,
                                   const size_t *cols,
                                   size_t len,
                                   double *out_values);

/**
 * # Safety
 * `model` must be a live handle from this library or null.
 */
size_t mbmf_model_rows(const struct MbmfModel *model);

/**
 * # Safety
 * `model` must be a live handle from this library or null.
 */
size_t mbmf_model_cols(const struct MbmfModel *model);

/**
 * # Safety
 * `model` must be a live handle from this library or null.
 */
size_t mbmf_model_k(const struct MbmfModel *model);

/**
 * Saves a model to the versioned text format.
 *
 * # Safety
 * Pointer rules as above.
 */
enum MbmfStatus mbmf_model_save(const struct MbmfModel *model, const char *path);

/**
 * Loads a model saved by [`mbmf_model_save`].
 *
 * # Safety
 * Pointer rules as above.
 */
enum MbmfStatus mbmf_model_load(const char *path, struct MbmfModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must have come from this library and not been freed before.
 */
void mbmf_model_free(struct MbmfModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MBMF_H */
