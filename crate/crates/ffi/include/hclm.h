#ifndef HCLM_H
#define HCLM_H

#include <stddef.h>
#include <stdint.h>

// Insertion bonus per emitted character.
#define HCLM_BONUS_CHAR 0

// Insertion bonus per completed word.
#define HCLM_BONUS_WORD 1

typedef enum HclmStatus {
  HCLM_STATUS_OK = 0,
  HCLM_STATUS_NULL_POINTER = 1,
  HCLM_STATUS_ARGUMENT = 2,
  HCLM_STATUS_CONFIG = 3,
  HCLM_STATUS_IO = 4,
  HCLM_STATUS_FORMAT = 5,
  HCLM_STATUS_OUT_OF_VOCABULARY = 6,
  HCLM_STATUS_DIMENSION = 7,
  HCLM_STATUS_NUMERIC = 8,
  HCLM_STATUS_EMPTY_CORPUS = 9,
  HCLM_STATUS_PANIC = 10,
} HclmStatus;

// A loaded checkpoint: network plus vocabulary.
typedef struct HclmModel HclmModel;

// Recurrent state of one stream. Valid only with the model that created it.
typedef struct HclmState HclmState;

// Beam-search settings. `bonus_unit` is `HCLM_BONUS_CHAR` or `HCLM_BONUS_WORD`;
// `depth_prune == 0` means unlimited.
typedef struct HclmDecodeOptions {
  size_t beam_width;
  double lm_weight;
  double insertion_bonus;
  uint32_t bonus_unit;
  double width_prune;
  size_t depth_prune;
} HclmDecodeOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next call into this library on the same thread.
const char *hclm_last_error(void);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum HclmStatus hclm_model_load(const char *path, struct HclmModel **out);

// # Safety
// `model` must come from [`hclm_model_load`] and not be used afterwards. NULL is ignored.
void hclm_model_free(struct HclmModel *model);

// Number of output symbols, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live model.
size_t hclm_model_vocab_size(const struct HclmModel *model);

// Number of trainable parameters, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live model.
size_t hclm_model_param_count(const struct HclmModel *model);

// Looks up the id of a symbol written as in a vocabulary file (`a`, `<w>`, `<s>`, `\x20`).
//
// # Safety
// `model` must be a live model, `symbol` a NUL-terminated string and `out` a valid pointer.
enum HclmStatus hclm_model_symbol_id(const struct HclmModel *model,
                                     const char *symbol,
                                     size_t *out);

// A fresh all-zero stream state. Feed the `<s>` id first to get the
// distribution of the first character.
//
// # Safety
// `model` must be a live model and `out` a valid pointer.
enum HclmStatus hclm_state_new(const struct HclmModel *model, struct HclmState **out);

// Copies a state; the copy evolves independently.
//
// # Safety
// `state` must be a live state and `out` a valid pointer.
enum HclmStatus hclm_state_clone(const struct HclmState *state, struct HclmState **out);

// # Safety
// `state` must come from this library and not be used afterwards. NULL is ignored.
void hclm_state_free(struct HclmState *state);

// Consumes symbol `id`, advances `state` and writes the next-symbol
// distribution into `probs`, which must hold exactly the vocabulary size.
// On failure the state is left unchanged.
//
// # Safety
// `model` and `state` must be live; `probs` must point to `probs_len` doubles.
enum HclmStatus hclm_step(const struct HclmModel *model,
                          struct HclmState *state,
                          size_t id,
                          double *probs,
                          size_t probs_len);

// Bits per character of `text`, tokenized with the model's vocabulary and
// scored as one sequence from the zero state.
//
// # Safety
// `model` must be live, `text` NUL-terminated and `out` a valid pointer.
enum HclmStatus hclm_bpc(const struct HclmModel *model, const char *text, double *out);

// The decoder defaults.
struct HclmDecodeOptions hclm_decode_options_default(void);

// CTC prefix beam search over a `frames × labels` row-major posterior matrix.
// `label_ids[k]` is the vocabulary id of column `k`, or -1 for the blank.
// `options` may be NULL for the defaults. The best transcript is returned in
// `out` and must be released with [`hclm_string_free`].
//
// # Safety
// `model` must be live; `posteriors` must hold `frames * labels` doubles and
// `label_ids` `labels` entries; `out` must be a valid pointer.
enum HclmStatus hclm_decode(const struct HclmModel *model,
                            const double *posteriors,
                            size_t frames,
                            size_t labels,
                            const int64_t *label_ids,
                            const struct HclmDecodeOptions *options,
                            char **out);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void hclm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HCLM_H */
