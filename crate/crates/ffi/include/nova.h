#ifndef NOVA_H
#define NOVA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum NovaStatus {
  NOVA_STATUS_OK = 0,
  // A required pointer was null.
  NOVA_STATUS_NULL_POINTER = 1,
  // Arguments violate a precondition.
  NOVA_STATUS_INVALID_ARGUMENT = 2,
  // A file could not be read.
  NOVA_STATUS_IO = 3,
  // A file was read but is not a valid checkpoint.
  NOVA_STATUS_FORMAT = 4,
  // A computation produced a non-finite value.
  NOVA_STATUS_NUMERICAL = 5,
  // Internal failure; the handle should not be used further.
  NOVA_STATUS_INTERNAL = 6,
} NovaStatus;

// Opaque handle to a loaded scene.
typedef struct NovaModel NovaModel;

// Pinhole camera. `rotation` is the camera-to-world rotation in row-major
// order and `translation` the camera center. The camera looks down its
// local -z axis with +y up; image rows grow downwards.
typedef struct NovaCamera {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
  double rotation[9];
  double translation[3];
} NovaCamera;

typedef struct NovaRenderSettings {
  double near;
  double far;
  // Samples per ray, at least 2.
  uint32_t samples;
  // Blending factor of the static field: 1 for a normal render, 0 to
  // show the dynamic fields alone.
  double static_beta;
} NovaRenderSettings;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *nova_last_error(void);

// Loads a checkpoint into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum NovaStatus nova_model_load(const char *path, struct NovaModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`nova_model_load`] and not be used afterwards.
void nova_model_free(struct NovaModel *model);

// Number of fields: one static field plus one per object. 0 for null.
//
// # Safety
// `model` must be null or a live handle.
uintptr_t nova_model_field_count(const struct NovaModel *model);

// Total trainable parameter count. 0 for null.
//
// # Safety
// `model` must be null or a live handle.
uintptr_t nova_model_param_count(const struct NovaModel *model);

// Renders the scene at `time`. `rgb` receives `width * height * 3` values
// (row-major, channels interleaved). `masks`, when not null, receives
// `field_count * width * height` values, field-major. `depth`, when not
// null, receives `width * height` values (0 where nothing was hit).
//
// # Safety
// Buffers must be valid for the sizes above.
enum NovaStatus nova_render(const struct NovaModel *model,
                            const struct NovaCamera *camera,
                            double time,
                            const struct NovaRenderSettings *settings,
                            double *rgb,
                            double *masks,
                            double *depth);

// PSNR in dB of two `pixels * 3` images, capped at 99.
//
// # Safety
// `pred` and `gt` must hold `pixels * 3` values; `out` must be valid.
enum NovaStatus nova_psnr(const double *pred, const double *gt, uintptr_t pixels, double *out);

// IoU of `pred >= 0.5` against the binary `gt`; 1 when both are empty.
//
// # Safety
// `pred` and `gt` must hold `len` values; `out` must be valid.
enum NovaStatus nova_mask_iou(const double *pred, const uint8_t *gt, uintptr_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOVA_H */
