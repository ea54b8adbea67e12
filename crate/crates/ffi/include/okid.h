#ifndef OKID_H
#define OKID_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OkidStatus {
  OKID_STATUS_OK = 0,
  OKID_STATUS_NULL_POINTER = 1,
  OKID_STATUS_INVALID_ARGUMENT = 2,
  OKID_STATUS_DIMENSION_MISMATCH = 3,
  OKID_STATUS_HORIZON = 4,
  OKID_STATUS_NUMERICAL = 5,
  OKID_STATUS_PARSE = 6,
  OKID_STATUS_BUFFER_TOO_SMALL = 7,
  OKID_STATUS_PANIC = 8,
} OkidStatus;

/*
 Which model matrix to copy out.
 */
typedef enum OkidMatrix {
  OKID_MATRIX_A = 0,
  OKID_MATRIX_B = 1,
  OKID_MATRIX_C = 2,
  OKID_MATRIX_D = 3,
  OKID_MATRIX_K = 4,
} OkidMatrix;

/*
 Opaque input/output record.
 */
typedef struct OkidDataset OkidDataset;

/*
 Opaque identified model with observer gain.
 */
typedef struct OkidModel OkidModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *okid_version(void);

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next call into the library from the same thread.
 */
const char *okid_last_error(void);

/*
 Build a dataset. `u` holds `inputs * len` samples, `y` holds
 `outputs * len`; both row-major with one row per channel.

 # Safety
 `u` and `y` must point to buffers of the stated sizes; `out` must be a
 valid pointer.
 */
enum OkidStatus okid_dataset_new(const double *u,
                                 size_t inputs,
                                 const double *y,
                                 size_t outputs,
                                 size_t len,
                                 double sample_rate,
                                 struct OkidDataset **out);

/*
 # Safety
 `data` must come from [`okid_dataset_new`] and not be freed twice.
 */
void okid_dataset_free(struct OkidDataset *data);

/*
 Identify a model. `order = 0` selects by `threshold` (relative to the
 largest Hankel singular value; non-positive means the default 1e-3).

 # Safety
 `data` must be a live dataset handle; `out` must be a valid pointer.
 */
enum OkidStatus okid_identify(const struct OkidDataset *data,
                              size_t horizon,
                              size_t order,
                              double threshold,
                              struct OkidModel **out);

/*
 # Safety
 `model` must come from this library and not be freed twice.
 */
void okid_model_free(struct OkidModel *model);

/*
 # Safety
 All pointers must be valid; output pointers may not be NULL.
 */
enum OkidStatus okid_model_dims(const struct OkidModel *model,
                                size_t *states,
                                size_t *inputs,
                                size_t *outputs);

/*
 Copy one matrix row-major into `buf` (`capacity` doubles).

 # Safety
 `buf` must hold `capacity` writable doubles.
 */
enum OkidStatus okid_model_matrix(const struct OkidModel *model,
                                  enum OkidMatrix which,
                                  double *buf,
                                  size_t capacity);

/*
 Hankel singular values, descending. `count` receives the total; at most
 `capacity` are written.

 # Safety
 `buf` must hold `capacity` doubles; `count` must be valid.
 */
enum OkidStatus okid_model_singular_values(const struct OkidModel *model,
                                           double *buf,
                                           size_t capacity,
                                           size_t *count);

/*
 Spectral radius of `A - K C`.

 # Safety
 `out` must be valid.
 */
enum OkidStatus okid_model_observer_spectral_radius(const struct OkidModel *model, double *out);

/*
 Serialize to JSON. Release the string with [`okid_string_free`].

 # Safety
 `out` must be valid.
 */
enum OkidStatus okid_model_to_json(const struct OkidModel *model, char **out);

/*
 Parse a model JSON string (must carry `K`).

 # Safety
 `json` must be NUL-terminated; `out` must be valid.
 */
enum OkidStatus okid_model_from_json(const char *json, struct OkidModel **out);

/*
 # Safety
 `s` must come from this library.
 */
void okid_string_free(char *s);

/*
 Evaluate the model at `count` frequencies. `re` and `im` each receive
 `count * outputs * inputs` values ordered by frequency, then output, then
 input.

 # Safety
 Buffers must have the stated sizes.
 */
enum OkidStatus okid_frequency_response(const struct OkidModel *model,
                                        const double *frequencies,
                                        size_t count,
                                        double sample_rate,
                                        double *re,
                                        double *im);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OKID_H */
