#ifndef SFL_H
#define SFL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SflStatus {
  SFL_STATUS_OK = 0,
  SFL_STATUS_INVALID_INPUT = 1,
  SFL_STATUS_INVALID_ARGUMENT = 2,
  SFL_STATUS_NUMERICAL_FAILURE = 3,
  SFL_STATUS_DISCONNECTED_GRAPH = 4,
  SFL_STATUS_EMPTY_DATASET = 5,
  SFL_STATUS_SPEC_VALIDATION = 6,
  SFL_STATUS_DIVERGENCE = 7,
  SFL_STATUS_CONFIG = 8,
  SFL_STATUS_IO = 9,
  SFL_STATUS_FORMAT = 10,
  SFL_STATUS_NULL_POINTER = 11,
  SFL_STATUS_PANIC = 12,
} SflStatus;

typedef enum SflMethod {
  SFL_METHOD_LLE = 0,
  SFL_METHOD_SE = 1,
  SFL_METHOD_MDS = 2,
  SFL_METHOD_ISO = 3,
  SFL_METHOD_TSNE = 4,
  SFL_METHOD_PCA = 5,
} SflMethod;

/**
 * A fitted embedding.
 */
typedef struct SflEmbedding SflEmbedding;

/**
 * A trained network loaded from a model file.
 */
typedef struct SflModel SflModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into the library on this thread.
 */
const char *sfl_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *sfl_version(void);

/**
 * Reduces a `rows × cols` matrix to `n_components` columns.
 *
 * `method` is an [`SflMethod`] value. `n_neighbors == 0` and
 * `perplexity <= 0` select the method defaults.
 *
 * # Safety
 * `data` points to `rows * cols` doubles; `out` is writable.
 */
enum SflStatus sfl_reduce(const double *data,
                          size_t rows,
                          size_t cols,
                          uint32_t method,
                          size_t n_components,
                          size_t n_neighbors,
                          double perplexity,
                          uint64_t seed,
                          struct SflEmbedding **out);

/**
 * # Safety
 * `emb` is a live handle or null.
 */
size_t sfl_embedding_rows(const struct SflEmbedding *emb);

/**
 * # Safety
 * `emb` is a live handle or null.
 */
size_t sfl_embedding_cols(const struct SflEmbedding *emb);

/**
 * Copies the coordinates, row-major, into `out` of length `len`
 * (at least rows × cols).
 *
 * # Safety
 * `out` points to `len` writable doubles.
 */
enum SflStatus sfl_embedding_copy(const struct SflEmbedding *emb, double *out, size_t len);

/**
 * Fit diagnostics as JSON (stress, KL divergence, spectrum, iterations,
 * seconds). Release with [`sfl_string_free`].
 *
 * # Safety
 * `out` is writable.
 */
enum SflStatus sfl_embedding_diagnostics_json(const struct SflEmbedding *emb, char **out);

/**
 * # Safety
 * `emb` came from [`sfl_reduce`] and is not used afterwards.
 */
void sfl_embedding_free(struct SflEmbedding *emb);

/**
 * # Safety
 * `s` came from this library and is not used afterwards.
 */
void sfl_string_free(char *s);

/**
 * Loads a model file written by `sfl train`.
 *
 * # Safety
 * `path` is a NUL-terminated UTF-8 string; `out` is writable.
 */
enum SflStatus sfl_model_load(const char *path, struct SflModel **out);

/**
 * # Safety
 * `model` is a live handle or null.
 */
size_t sfl_model_n_params(const struct SflModel *model);

/**
 * Class probabilities (`rows × 3`, row-major) and, when `labels` is
 * non-null, the argmax class per row.
 *
 * # Safety
 * `bio` holds `rows * bio_cols` doubles, `landmarks` `rows * landmark_cols`,
 * `proba` has room for `rows * 3`, `labels` (optional) for `rows`.
 */
enum SflStatus sfl_model_predict(const struct SflModel *model,
                                 const double *bio,
                                 size_t bio_cols,
                                 const double *landmarks,
                                 size_t landmark_cols,
                                 size_t rows,
                                 double *proba,
                                 uint8_t *labels);

/**
 * # Safety
 * `model` came from [`sfl_model_load`] and is not used afterwards.
 */
void sfl_model_free(struct SflModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SFL_H */
