#ifndef ACNN_H
#define ACNN_H

/* Generated by cbindgen from acnn-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum AcnnStatus {
  // Success.
  ACNN_STATUS_OK = 0,
  // A required pointer argument was NULL.
  ACNN_STATUS_NULL_ARGUMENT = 1,
  // An argument failed validation (bad UTF-8, bad config, bad shape).
  ACNN_STATUS_INVALID_ARGUMENT = 2,
  // The filesystem said no.
  ACNN_STATUS_IO = 3,
  // A file exists but is not in the expected format.
  ACNN_STATUS_BAD_FORMAT = 4,
  // A bug: unexpected internal failure, details in `acnn_last_error`.
  ACNN_STATUS_INTERNAL = 5,
} AcnnStatus;

// Opaque logMel feature extractor.
typedef struct AcnnFrontend AcnnFrontend;

// Opaque trained classifier loaded from a checkpoint.
typedef struct AcnnModel AcnnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Human-readable description of the most recent failure on this thread, or
// an empty string. Valid until this thread's next call into the library.
const char *acnn_last_error(void);

// Library version as a static NUL-terminated string.
const char *acnn_version(void);

// Creates a feature extractor. `config_json` may be NULL for the built-in
// configuration (26 mel bands, 25 ms frames, 10 ms shift, 7.5 s at 16 kHz);
// otherwise it is a JSON object overriding any subset of the configuration
// fields.
//
// # Safety
// `config_json` must be NULL or a valid NUL-terminated string, and `out`
// must be a valid pointer.
enum AcnnStatus acnn_frontend_new(const char *config_json, struct AcnnFrontend **out);

// Releases a frontend handle.
//
// # Safety
// `frontend` must be NULL or a pointer from `acnn_frontend_new` that has not
// been freed already.
void acnn_frontend_free(struct AcnnFrontend *frontend);

// Number of mel bands (feature rows) this frontend produces.
//
// # Safety
// `frontend` must be a valid handle.
size_t acnn_frontend_n_mels(const struct AcnnFrontend *frontend);

// Number of frames (feature columns) this frontend produces; input audio is
// padded or truncated to exactly this length.
//
// # Safety
// `frontend` must be a valid handle.
size_t acnn_frontend_total_frames(const struct AcnnFrontend *frontend);

// Reads a WAV file and writes its logMel features as a freshly allocated
// row-major `*out_rows x *out_cols` buffer into `*out_data`. Release with
// `acnn_buffer_free(*out_data, *out_rows * *out_cols)`.
//
// # Safety
// `frontend` must be a valid handle, `wav_path` a valid NUL-terminated
// string, and the three out-pointers valid.
enum AcnnStatus acnn_frontend_features_from_wav(const struct AcnnFrontend *frontend,
                                                const char *wav_path,
                                                double **out_data,
                                                size_t *out_rows,
                                                size_t *out_cols);

// Releases a buffer returned by this library. `len` must be the element
// count the producing call reported.
//
// # Safety
// `ptr` must be NULL or an unreleased buffer of exactly `len` elements
// returned by this library.
void acnn_buffer_free(double *ptr, size_t len);

// Loads a trained model from a checkpoint file.
//
// # Safety
// `checkpoint_path` must be a valid NUL-terminated string and `out` a valid
// pointer.
enum AcnnStatus acnn_model_load(const char *checkpoint_path, struct AcnnModel **out);

// Releases a model handle.
//
// # Safety
// `model` must be NULL or a pointer from `acnn_model_load` that has not been
// freed already.
void acnn_model_free(struct AcnnModel *model);

// Number of mel bands (feature rows) the model expects.
//
// # Safety
// `model` must be a valid handle.
size_t acnn_model_n_mels(const struct AcnnModel *model);

// Classifies one utterance. `features` is a row-major `rows x cols` logMel
// matrix. Writes the class posteriors to `probs_out[0..2]` and the argmax
// class (0 or 1) to `class_out`.
//
// # Safety
// `model` must be a valid handle, `features` must point to `rows * cols`
// doubles, `probs_out` to two doubles, and `class_out` must be valid.
enum AcnnStatus acnn_model_predict(const struct AcnnModel *model,
                                   const double *features,
                                   size_t rows,
                                   size_t cols,
                                   double *probs_out,
                                   size_t *class_out);

// Computes the attention weights the model assigns across pooled time steps
// of one utterance. Writes a freshly allocated buffer of `*alpha_len`
// weights summing to 1 into `*alpha_out`; release with
// `acnn_buffer_free(*alpha_out, *alpha_len)`.
//
// # Safety
// `model` must be a valid handle, `features` must point to `rows * cols`
// doubles, and the out-pointers must be valid.
enum AcnnStatus acnn_model_attention(const struct AcnnModel *model,
                                     const double *features,
                                     size_t rows,
                                     size_t cols,
                                     double **alpha_out,
                                     size_t *alpha_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACNN_H */
