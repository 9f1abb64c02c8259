#ifndef PLAYSEQ_H
#define PLAYSEQ_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_UTF8 = 2,
  PS_STATUS_INVALID_ARGUMENT = 3,
  PS_STATUS_IO = 4,
  PS_STATUS_NOT_FOUND = 5,
  PS_STATUS_VOCAB_MISMATCH = 6,
  PS_STATUS_FORMAT = 7,
  PS_STATUS_BUFFER_TOO_SMALL = 8,
  PS_STATUS_INTERNAL = 9,
  PS_STATUS_PANIC = 10,
} PsStatus;

// A loaded episode corpus.
typedef struct PsCorpus PsCorpus;

// A loaded checkpoint.
typedef struct PsModel PsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ps_version(void);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *ps_last_error(void);

// # Safety
// `s` must be null or a string returned by this library.
void ps_string_free(char *s);

// # Safety
// `path` must be a NUL-terminated string; `out` a valid pointer.
enum PsStatus ps_model_load(const char *path, struct PsModel **out);

// # Safety
// `model` must be null or a handle from `ps_model_load` not yet freed.
void ps_model_free(struct PsModel *model);

// # Safety
// `model` must be a live handle; `vocab_size` and `embed_dim` valid pointers.
enum PsStatus ps_model_dims(const struct PsModel *model, size_t *vocab_size, size_t *embed_dim);

// Copies a player's embedding into `buf`, which must hold `embed_dim` floats.
//
// # Safety
// `model` must be a live handle; `buf` must point to `len` writable floats.
enum PsStatus ps_player_embedding(const struct PsModel *model,
                                  uint32_t player_id,
                                  float *buf,
                                  size_t len);

// JSON array of the `k` most similar players.
//
// # Safety
// `model` must be a live handle; `out` a valid pointer.
enum PsStatus ps_similar_players_json(const struct PsModel *model,
                                      uint32_t player_id,
                                      size_t k,
                                      char **out);

// # Safety
// `path` must be a NUL-terminated string; `out` a valid pointer.
enum PsStatus ps_corpus_load(const char *path, struct PsCorpus **out);

// # Safety
// `corpus` must be null or a handle from `ps_corpus_load` not yet freed.
void ps_corpus_free(struct PsCorpus *corpus);

// # Safety
// `corpus` must be a live handle; `len` a valid pointer.
enum PsStatus ps_corpus_len(const struct PsCorpus *corpus, size_t *len);

// Teacher-forced metrics as a JSON object.
//
// # Safety
// Handles must be live; `out` a valid pointer.
enum PsStatus ps_evaluate_json(const struct PsModel *model,
                               const struct PsCorpus *corpus,
                               char **out);

// Runs a what-if substitution. `request_json` holds at least `out_player`
// and `in_player`; the remaining fields take their defaults.
//
// # Safety
// Handles must be live; `request_json` NUL-terminated; `out` a valid pointer.
enum PsStatus ps_simulate_json(const struct PsModel *model,
                               const struct PsCorpus *corpus,
                               const char *request_json,
                               char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLAYSEQ_H */
