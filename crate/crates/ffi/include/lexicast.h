#ifndef LEXICAST_H
#define LEXICAST_H

/* Generated header; edit the Rust sources instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call in this interface.
 */
enum LexicastStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  LEXICAST_STATUS_OK = 0,
  LEXICAST_STATUS_NULL_ARGUMENT = 1,
  LEXICAST_STATUS_INVALID_UTF8 = 2,
  LEXICAST_STATUS_IO = 3,
  LEXICAST_STATUS_PARSE = 4,
  LEXICAST_STATUS_CONFIG = 5,
  LEXICAST_STATUS_CONTRACT = 6,
  LEXICAST_STATUS_NUMERIC = 7,
  LEXICAST_STATUS_ANALYSIS = 8,
  LEXICAST_STATUS_PANIC = 9,
};
#ifndef __cplusplus
typedef int32_t LexicastStatus;
#endif // __cplusplus

/**
 * A loaded checkpoint: the trained model plus its embedding table.
 */
typedef struct LexicastModel LexicastModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of this library as a static nul-terminated string.
 */
const char *lexicast_version(void);

/**
 * Message for the calling thread's most recent failure, or null after
 * a success. The pointer stays valid until the next call on the same
 * thread.
 */
const char *lexicast_last_error(void);

/**
 * Loads a checkpoint file into a fresh handle stored in `*out`.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must point to writable
 * pointer storage.
 */
LexicastStatus lexicast_model_load(const char *path, struct LexicastModel **out);

/**
 * Releases a handle from [`lexicast_model_load`]. Null is a no-op.
 *
 * # Safety
 * `model` must be a pointer returned by [`lexicast_model_load`] that
 * has not been freed yet, or null.
 */
void lexicast_model_free(struct LexicastModel *model);

/**
 * Predicts successor words for a space-separated window of tokens.
 * On success `*out_json` receives a JSON array with one ranked
 * `[form, cosine]` list per horizon slot.
 *
 * # Safety
 * `model` must be a live handle; `words` a nul-terminated string;
 * `out_json` writable pointer storage. Free the result with
 * [`lexicast_string_free`].
 */
LexicastStatus lexicast_model_predict(const struct LexicastModel *model,
                                      const char *words,
                                      size_t k,
                                      char **out_json);

/**
 * Releases a string produced by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be a pointer this library handed out through an out-param
 * and not yet freed, or null.
 */
void lexicast_string_free(char *s);

/**
 * Computes the GDV of `n` points in `d` dimensions. `points` is
 * row-major n×d; `labels` holds one arbitrary class id per point.
 *
 * # Safety
 * `points` must reference n·d doubles, `labels` n ids, and `out_gdv`
 * one writable double.
 */
LexicastStatus lexicast_gdv(const double *points,
                            size_t n,
                            size_t d,
                            const uint32_t *labels,
                            double *out_gdv);

/**
 * Projects `n` points in `d` dimensions to the plane with classical
 * MDS. `out_coords` receives n (x, y) pairs, row-major.
 *
 * # Safety
 * `points` must reference n·d doubles and `out_coords` 2·n writable
 * doubles.
 */
LexicastStatus lexicast_mds2(const double *points, size_t n, size_t d, double *out_coords);

/**
 * Runs the full experiment pipeline described by a JSON config file.
 *
 * # Safety
 * `config_path` must be a nul-terminated string.
 */
LexicastStatus lexicast_run_experiment(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEXICAST_H */
