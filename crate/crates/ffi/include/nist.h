#ifndef NIST_H
#define NIST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum NistStatus {
  NIST_STATUS_OK = 0,
  NIST_STATUS_NULL_POINTER = 1,
  NIST_STATUS_INVALID_ARGUMENT = 2,
  NIST_STATUS_IO = 3,
  NIST_STATUS_FORMAT = 4,
  NIST_STATUS_CHECKPOINT = 5,
  NIST_STATUS_SHAPE = 6,
  NIST_STATUS_CONFIG = 7,
  NIST_STATUS_PANIC = 8,
  NIST_STATUS_OTHER = 9,
} NistStatus;

/**
 * One G-buffer frame (opaque).
 */
typedef struct NistFrame NistFrame;

/**
 * Trained model (opaque).
 */
typedef struct NistModel NistModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread ("" after success).
 * Valid until the next call into this library on the same thread.
 */
const char *nist_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nist_version(void);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NistStatus nist_model_load(const char *path, struct NistModel **out);

/**
 * Number of scalar parameters, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t nist_model_param_count(const struct NistModel *model);

/**
 * Full-resolution sizes must be multiples of this; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t nist_model_resolution_divisor(const struct NistModel *model);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void nist_model_free(struct NistModel *model);

/**
 * Reads a frame directory (`color.pfm`, `depth.pfm`, ...).
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NistStatus nist_frame_load_dir(const char *dir, struct NistFrame **out);

/**
 * Builds a frame from interleaved row-major (top row first) buffers:
 * color, gnormal and snormal hold 3 floats per pixel, depth and coverage 1.
 * The label channel is set to the color (it is unused for inference).
 *
 * # Safety
 * Each pointer must reference `width * height * channels` floats.
 */
enum NistStatus nist_frame_from_buffers(size_t width,
                                        size_t height,
                                        const float *color,
                                        const float *depth,
                                        const float *gnormal,
                                        const float *snormal,
                                        const float *coverage,
                                        struct NistFrame **out);

/**
 * # Safety
 * `frame` must be null or a live handle.
 */
size_t nist_frame_width(const struct NistFrame *frame);

/**
 * # Safety
 * `frame` must be null or a live handle.
 */
size_t nist_frame_height(const struct NistFrame *frame);

/**
 * # Safety
 * `frame` must be null or a handle not yet freed.
 */
void nist_frame_free(struct NistFrame *frame);

/**
 * Runs the model and writes `width * height * 3` interleaved RGB floats.
 *
 * # Safety
 * Handles must be live; `out_rgb` must hold `out_len` floats.
 */
enum NistStatus nist_model_infer(const struct NistModel *model,
                                 const struct NistFrame *frame,
                                 float *out_rgb,
                                 size_t out_len);

/**
 * Phong-tessellated point of barycentric `uvw` on one triangle.
 * `vertices` and `normals` are three xyz triples; normals must be unit.
 *
 * # Safety
 * `vertices`, `normals` hold 9 doubles, `uvw` and `out` 3.
 */
enum NistStatus nist_phong_point(const double *vertices,
                                 const double *normals,
                                 const double *uvw,
                                 double alpha,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NIST_H */
