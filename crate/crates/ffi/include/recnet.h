#ifndef RECNET_H
#define RECNET_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every exported function.
typedef enum RecnetStatus {
  RECNET_STATUS_OK = 0,
  RECNET_STATUS_NULL_POINTER = 1,
  RECNET_STATUS_INVALID_ARGUMENT = 2,
  RECNET_STATUS_SHAPE = 3,
  RECNET_STATUS_IO = 4,
  RECNET_STATUS_CHECKPOINT = 5,
  RECNET_STATUS_CONFIG = 6,
  RECNET_STATUS_INTERNAL = 7,
  RECNET_STATUS_PANIC = 8,
} RecnetStatus;

// Opaque model handle. Create with `recnet_model_new` or
// `recnet_model_load`, release with `recnet_model_free`.
typedef struct RecnetModel RecnetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Writes the last error of the calling thread into `buf` as a
// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
// message length excluding the terminator, or 0 when there is no error.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t recnet_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *recnet_version(void);

// Creates a freshly initialized model. Passing 0 for `num_blocks`,
// `base_channels` or `attn_heads` selects the default for that field.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum RecnetStatus recnet_model_new(size_t num_blocks,
                                   size_t base_channels,
                                   size_t attn_heads,
                                   uint64_t seed,
                                   struct RecnetModel **out);

// Loads model weights from a checkpoint file; optimizer state is ignored.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for one write.
enum RecnetStatus recnet_model_load(const char *path, struct RecnetModel **out);

// Saves model weights (step 0, no optimizer state).
//
// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum RecnetStatus recnet_model_save(const struct RecnetModel *model, const char *path);

// Releases a handle. Null is a no-op.
//
// # Safety
// `model` must be null or a handle not yet freed.
void recnet_model_free(struct RecnetModel *model);

// Number of blocks, which is the number of mask planes `recnet_correct`
// writes.
//
// # Safety
// `model` must be a live handle and `out` valid for one write.
enum RecnetStatus recnet_model_num_blocks(const struct RecnetModel *model, size_t *out);

// Total trainable parameter count.
//
// # Safety
// `model` must be a live handle and `out` valid for one write.
enum RecnetStatus recnet_model_num_params(const struct RecnetModel *model, size_t *out);

// Corrects one image. `output` receives `width * height * 3` values;
// `masks`, if not null, receives `num_blocks * width * height` values.
// Both sides must be at least 8 pixels.
//
// # Safety
// `input` must hold `width * height * 3` readable floats, `output` as many
// writable ones, and `masks` null or `num_blocks * width * height`
// writable floats.
enum RecnetStatus recnet_correct(const struct RecnetModel *model,
                                 const float *input,
                                 size_t width,
                                 size_t height,
                                 float *output,
                                 float *masks);

// PSNR in dB between two images of equal size, capped at 100 for
// identical inputs.
//
// # Safety
// `a` and `b` must each hold `width * height * 3` floats; `out` valid
// for one write.
enum RecnetStatus recnet_psnr(const float *a,
                              const float *b,
                              size_t width,
                              size_t height,
                              double *out);

// Mean SSIM over luma, 11x11 Gaussian window (sigma 1.5). Both sides
// must be at least 11 pixels.
//
// # Safety
// Same as `recnet_psnr`.
enum RecnetStatus recnet_ssim(const float *a,
                              const float *b,
                              size_t width,
                              size_t height,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECNET_H */
