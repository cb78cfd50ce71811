#ifndef LOMAE_H
#define LOMAE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LomaeStatus {
  LOMAE_STATUS_OK = 0,
  LOMAE_STATUS_INVALID_ARGUMENT = 1,
  LOMAE_STATUS_SHAPE = 2,
  LOMAE_STATUS_CONFIG = 3,
  LOMAE_STATUS_DOSE = 4,
  LOMAE_STATUS_DEGENERATE = 5,
  LOMAE_STATUS_PROTOCOL = 6,
  LOMAE_STATUS_CHECKPOINT = 7,
  LOMAE_STATUS_FORMAT = 8,
  LOMAE_STATUS_IO = 9,
  LOMAE_STATUS_NULL_POINTER = 10,
  LOMAE_STATUS_PANIC = 11,
} LomaeStatus;

/**
 * A denoising network.
 */
typedef struct LomaeModel LomaeModel;

/**
 * A single-channel image.
 */
typedef struct LomaeSlice LomaeSlice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *lomae_last_error(void);

/**
 * Copies `h * w` row-major floats into a new slice.
 *
 * # Safety
 * `data` must point to `h * w` readable floats; `out` must be writable.
 */
enum LomaeStatus lomae_slice_new(const float *data, size_t h, size_t w, struct LomaeSlice **out);

/**
 * # Safety
 * `slice` must be a live handle; `h` and `w` must be writable.
 */
enum LomaeStatus lomae_slice_dims(const struct LomaeSlice *slice, size_t *h, size_t *w);

/**
 * Copies the pixels into `out`, which must hold `len >= h * w` floats.
 *
 * # Safety
 * `slice` must be a live handle; `out` must point to `len` writable floats.
 */
enum LomaeStatus lomae_slice_copy(const struct LomaeSlice *slice, float *out, size_t len);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LomaeStatus lomae_slice_read(const char *path, struct LomaeSlice **out);

/**
 * # Safety
 * `slice` must be a live handle; `path` a NUL-terminated string.
 */
enum LomaeStatus lomae_slice_write(const struct LomaeSlice *slice, const char *path);

/**
 * # Safety
 * `slice` must come from this library and not be used afterwards.
 */
void lomae_slice_free(struct LomaeSlice *slice);

/**
 * Simulates one phantom slice (`shepp_logan`, `ellipse_soup` or `disk`) and
 * its noisy reconstruction at incident count `dose`.
 *
 * # Safety
 * `phantom` must be a NUL-terminated string; `noisy` and `clean` writable.
 */
enum LomaeStatus lomae_simulate_pair(const char *phantom,
                                     size_t n,
                                     size_t views,
                                     double dose,
                                     double attenuation_per_mm,
                                     uint64_t seed,
                                     struct LomaeSlice **noisy,
                                     struct LomaeSlice **clean);

/**
 * Builds a named preset (`desk_swinir`, `desk_sunet`, `paper_swinir`,
 * `paper_sunet`) with the front-to-end shortcut on.
 *
 * # Safety
 * `preset` must be a NUL-terminated string; `out` must be writable.
 */
enum LomaeStatus lomae_model_build(const char *preset, uint64_t seed, struct LomaeModel **out);

/**
 * Loads a checkpoint directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum LomaeStatus lomae_model_load(const char *dir, struct LomaeModel **out);

/**
 * Saves as a finetuned checkpoint when `finetuned` is nonzero, otherwise as
 * pretrained.
 *
 * # Safety
 * `model` must be a live handle; `dir` a NUL-terminated string.
 */
enum LomaeStatus lomae_model_save(const struct LomaeModel *model,
                                  const char *dir,
                                  int32_t finetuned);

/**
 * # Safety
 * `model` must be a live handle.
 */
enum LomaeStatus lomae_model_set_shortcut(struct LomaeModel *model, int32_t enabled);

/**
 * # Safety
 * `model` must be a live handle; `size` writable.
 */
enum LomaeStatus lomae_model_input_size(const struct LomaeModel *model, size_t *size);

/**
 * Denoises `input` into a new slice.
 *
 * # Safety
 * `model` and `input` must be live handles; `out` writable.
 */
enum LomaeStatus lomae_model_forward(const struct LomaeModel *model,
                                     const struct LomaeSlice *input,
                                     struct LomaeSlice **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void lomae_model_free(struct LomaeModel *model);

/**
 * Mean local SSIM (11-pixel Gaussian window).
 *
 * # Safety
 * `a` and `b` must be live handles; `out` writable.
 */
enum LomaeStatus lomae_ssim(const struct LomaeSlice *a, const struct LomaeSlice *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOMAE_H */
