/* C interface of the parcus classifier. */

#ifndef PARCUS_H
#define PARCUS_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ParcusStatus {
  PARCUS_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PARCUS_STATUS_NULL_POINTER = 1,
  /**
   * Bad configuration, option value or index.
   */
  PARCUS_STATUS_INVALID_ARGUMENT = 2,
  PARCUS_STATUS_IO = 3,
  /**
   * Malformed input file.
   */
  PARCUS_STATUS_PARSE = 4,
  /**
   * Non-finite computation or diverged training.
   */
  PARCUS_STATUS_NUMERIC = 5,
  /**
   * A string argument was not valid UTF-8.
   */
  PARCUS_STATUS_UTF8 = 6,
  /**
   * Internal panic; state is still consistent but the call did nothing.
   */
  PARCUS_STATUS_INTERNAL = 7,
} ParcusStatus;

/**
 * Opaque corpus handle.
 */
typedef struct ParcusCorpus ParcusCorpus;

/**
 * Opaque trained-model handle (model plus its loss settings).
 */
typedef struct ParcusModel ParcusModel;

/**
 * Opaque embedding table handle.
 */
typedef struct ParcusTable ParcusTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *parcus_last_error(void);

/**
 * Library version as a static string.
 */
const char *parcus_version(void);

/**
 * Loads an embedding table (`"V n"` header, then token + floats lines).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum ParcusStatus parcus_table_load(const char *path, struct ParcusTable **out);

/**
 * Embedding dimension, or 0 for a null handle.
 *
 * # Safety
 * `table` must be null or come from `parcus_table_load`.
 */
size_t parcus_table_dim(const struct ParcusTable *table);

/**
 * Vocabulary size, or 0 for a null handle.
 *
 * # Safety
 * `table` must be null or come from `parcus_table_load`.
 */
size_t parcus_table_len(const struct ParcusTable *table);

/**
 * # Safety
 * `table` must come from `parcus_table_load` and not be freed twice.
 */
void parcus_table_free(struct ParcusTable *table);

/**
 * Loads a JSON-lines corpus against a table.
 *
 * # Safety
 * All pointers must be valid; `table` must outlive the call.
 */
enum ParcusStatus parcus_corpus_load(const char *path,
                                     const struct ParcusTable *table,
                                     size_t num_classes,
                                     struct ParcusCorpus **out);

/**
 * Document count, or 0 for a null handle.
 *
 * # Safety
 * `corpus` must be null or come from `parcus_corpus_load`.
 */
size_t parcus_corpus_len(const struct ParcusCorpus *corpus);

/**
 * # Safety
 * `corpus` must come from `parcus_corpus_load` and not be freed twice.
 */
void parcus_corpus_free(struct ParcusCorpus *corpus);

/**
 * Trains a model on the whole corpus. `config_text` uses the same
 * `key = value` lines as the CLI config file (may be null for defaults);
 * model kind, hyperparameters and the seed all come from it.
 *
 * # Safety
 * All pointers must be valid for the duration of the call.
 */
enum ParcusStatus parcus_train(const struct ParcusTable *table,
                               const struct ParcusCorpus *corpus,
                               const char *config_text,
                               struct ParcusModel **out);

/**
 * # Safety
 * `path` must be a valid string; `out` a valid pointer.
 */
enum ParcusStatus parcus_model_load(const char *path, struct ParcusModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be a valid string.
 */
enum ParcusStatus parcus_model_save(const struct ParcusModel *model, const char *path);

/**
 * Class count, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t parcus_model_num_classes(const struct ParcusModel *model);

/**
 * # Safety
 * `model` must come from this library and not be freed twice.
 */
void parcus_model_free(struct ParcusModel *model);

/**
 * Predicted class of document `index`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ParcusStatus parcus_predict(const struct ParcusModel *model,
                                 const struct ParcusCorpus *corpus,
                                 size_t index,
                                 size_t *class_out);

/**
 * Classifies a token list: unknown tokens are dropped (as during corpus
 * ingestion), class probabilities are written into `probs_out`, which
 * must hold `parcus_model_num_classes` doubles.
 *
 * # Safety
 * `tokens` must point to `num_tokens` valid strings; `probs_out` must be
 * writable for the class count.
 */
enum ParcusStatus parcus_predict_tokens(const struct ParcusModel *model,
                                        const struct ParcusTable *table,
                                        const char *const *tokens,
                                        size_t num_tokens,
                                        double *probs_out,
                                        size_t *class_out);

/**
 * Accuracy and positive-class F1 of the model over a labelled corpus.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ParcusStatus parcus_evaluate(const struct ParcusModel *model,
                                  const struct ParcusCorpus *corpus,
                                  double *accuracy_out,
                                  double *f1_out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PARCUS_H */
