/* Minimal C consumer: extract features from a WAV, classify it, and show
 * where the model's attention goes.
 *
 * Build (from the repository root, after `cargo build -p acnn-ffi`):
 *   cc crates/acnn-ffi/examples/demo.c -Icrates/acnn-ffi/include \
 *      -Ltarget/debug -lacnn_ffi -o demo
 *   LD_LIBRARY_PATH=target/debug ./demo <utterance.wav> <model.acnp>
 */

#include <stdio.h>
#include <stdlib.h>

#include "acnn.h"

static int fail(const char *what) {
  fprintf(stderr, "%s: %s\n", what, acnn_last_error());
  return 1;
}

int main(int argc, char **argv) {
  printf("acnn %s\n", acnn_version());
  if (argc < 3) {
    fprintf(stderr, "usage: %s <utterance.wav> <model.acnp>\n", argv[0]);
    return 2;
  }

  AcnnFrontend *frontend = NULL;
  if (acnn_frontend_new(NULL, &frontend) != ACNN_STATUS_OK)
    return fail("frontend");
  printf("frontend: %zu mel bands x %zu frames\n",
         acnn_frontend_n_mels(frontend), acnn_frontend_total_frames(frontend));

  double *features = NULL;
  size_t rows = 0, cols = 0;
  if (acnn_frontend_features_from_wav(frontend, argv[1], &features, &rows,
                                      &cols) != ACNN_STATUS_OK)
    return fail(argv[1]);

  AcnnModel *model = NULL;
  if (acnn_model_load(argv[2], &model) != ACNN_STATUS_OK)
    return fail(argv[2]);

  double probs[2];
  size_t class_idx = 0;
  if (acnn_model_predict(model, features, rows, cols, probs, &class_idx) !=
      ACNN_STATUS_OK)
    return fail("predict");
  printf("class %zu (p0 %.4f, p1 %.4f)\n", class_idx, probs[0], probs[1]);

  double *alpha = NULL;
  size_t alpha_len = 0;
  if (acnn_model_attention(model, features, rows, cols, &alpha, &alpha_len) !=
      ACNN_STATUS_OK)
    return fail("attention");
  size_t peak = 0;
  for (size_t i = 1; i < alpha_len; i++)
    if (alpha[i] > alpha[peak]) peak = i;
  printf("attention peak at step %zu of %zu (weight %.4f)\n", peak, alpha_len,
         alpha[peak]);

  acnn_buffer_free(alpha, alpha_len);
  acnn_buffer_free(features, rows * cols);
  acnn_model_free(model);
  acnn_frontend_free(frontend);
  return 0;
}
