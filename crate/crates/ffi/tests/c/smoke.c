#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "hclm.h"

#define CHECK(call)                                                      \
  do {                                                                   \
    HclmStatus s_ = (call);                                              \
    if (s_ != HCLM_STATUS_OK) {                                          \
      fprintf(stderr, "%s failed: %d %s\n", #call, (int)s_,              \
              hclm_last_error() ? hclm_last_error() : "");               \
      return 1;                                                          \
    }                                                                    \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 2) return 2;
  HclmModel *model = NULL;
  CHECK(hclm_model_load(argv[1], &model));
  size_t v = hclm_model_vocab_size(model);
  size_t sentence = 0, a = 0;
  CHECK(hclm_model_symbol_id(model, "<s>", &sentence));
  CHECK(hclm_model_symbol_id(model, "a", &a));

  HclmState *state = NULL, *fork = NULL;
  CHECK(hclm_state_new(model, &state));
  double *p = malloc(v * sizeof(double));
  double *q = malloc(v * sizeof(double));
  CHECK(hclm_step(model, state, sentence, p, v));
  CHECK(hclm_state_clone(state, &fork));
  CHECK(hclm_step(model, state, a, p, v));
  CHECK(hclm_step(model, fork, a, q, v));
  double sum = 0.0;
  for (size_t i = 0; i < v; i++) {
    if (p[i] != q[i]) return 3;
    sum += p[i];
  }
  if (fabs(sum - 1.0) > 1e-9) return 4;

  if (hclm_step(model, state, v + 7, p, v) == HCLM_STATUS_OK) return 5;
  if (hclm_last_error() == NULL) return 6;

  double bpc = 0.0;
  CHECK(hclm_bpc(model, "ab ba\n", &bpc));

  double post[] = {0.1, 0.9};
  int64_t labels[] = {-1, (int64_t)a};
  HclmDecodeOptions opts = hclm_decode_options_default();
  opts.lm_weight = 0.0;
  opts.insertion_bonus = 0.0;
  char *text = NULL;
  CHECK(hclm_decode(model, post, 1, 2, labels, &opts, &text));
  int ok = strcmp(text, "a") == 0;
  printf("bpc %.6f transcript %s\n", bpc, text);

  hclm_string_free(text);
  hclm_state_free(fork);
  hclm_state_free(state);
  hclm_model_free(model);
  free(p);
  free(q);
  return ok ? 0 : 7;
}
