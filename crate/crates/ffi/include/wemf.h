#ifndef WEMF_H
#define WEMF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WemfStatus {
  WEMF_STATUS_OK = 0,
  WEMF_STATUS_NULL_POINTER = 1,
  WEMF_STATUS_INVALID_ARGUMENT = 2,
  WEMF_STATUS_IO = 3,
  WEMF_STATUS_DATA = 4,
  WEMF_STATUS_NUMERIC = 5,
  WEMF_STATUS_PANIC = 6,
} WemfStatus;

/**
 * A network with its weights and input windows.
 */
typedef struct WemfModel WemfModel;

/**
 * A CT volume in Hounsfield units.
 */
typedef struct WemfVolume WemfVolume;

/**
 * Binary-mask metrics. `hd95_mm` is NaN when exactly one mask is empty.
 */
typedef struct WemfMaskMetrics {
  double dsc;
  double iou;
  double hd95_mm;
  double nsd;
  double accuracy;
  double recall;
  double specificity;
  double precision;
} WemfMaskMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *wemf_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library from this thread.
 */
const char *wemf_last_error(void);

/**
 * Map one HU value through a window into `[0, 1]`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum WemfStatus wemf_window_map(double level, double width, double hu, double *out);

/**
 * Read a `short` NRRD volume.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum WemfStatus wemf_volume_read(const char *path, struct WemfVolume **out);

/**
 * Build a volume from `dims[0] * dims[1] * dims[2]` HU values, x fastest.
 *
 * # Safety
 * `dims` and `spacing_mm` must point to 3 values, `hu` to the full voxel
 * count, and `out` must be valid for one write.
 */
enum WemfStatus wemf_volume_from_hu(const size_t *dims,
                                    const double *spacing_mm,
                                    const int16_t *hu,
                                    struct WemfVolume **out);

/**
 * Write dims (3 values) and spacing (3 values); either pointer may be NULL.
 *
 * # Safety
 * `volume` must come from this library; non-null outputs must hold 3 values.
 */
enum WemfStatus wemf_volume_geometry(const struct WemfVolume *volume,
                                     size_t *dims,
                                     double *spacing_mm);

/**
 * Window every voxel into three channels, voxel-major (`out[3 * i + c]`).
 * `windows` holds `(level, width)` for each channel, or NULL for the
 * default, abdomen and spine windows. `len` must equal `3 * voxels`.
 *
 * # Safety
 * `volume` must come from this library, `windows` (if non-null) must hold
 * 6 values and `out` must be valid for `len` writes.
 */
enum WemfStatus wemf_volume_window(const struct WemfVolume *volume,
                                   const double *windows,
                                   double *out,
                                   size_t len);

/**
 * # Safety
 * `volume` must come from this library or be NULL, and not be used again.
 */
void wemf_volume_free(struct WemfVolume *volume);

/**
 * Create a model from a run-configuration JSON document (NULL for the
 * defaults) with weights initialised from `seed`.
 *
 * # Safety
 * `config_json` must be NULL or NUL-terminated; `out` valid for one write.
 */
enum WemfStatus wemf_model_new(const char *config_json, uint64_t seed, struct WemfModel **out);

/**
 * Replace the weights with a checkpoint; the model is unchanged on failure.
 *
 * # Safety
 * `model` must come from this library and `path` be NUL-terminated.
 */
enum WemfStatus wemf_model_load(struct WemfModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library and `out` be valid for one write.
 */
enum WemfStatus wemf_model_param_count(const struct WemfModel *model, size_t *out);

/**
 * In-plane size the model expects.
 *
 * # Safety
 * `model` must come from this library and `out` be valid for one write.
 */
enum WemfStatus wemf_model_img_size(const struct WemfModel *model, size_t *out);

/**
 * Segment every axial slice into `labels` (0 background, 1 tumor, 2 cyst),
 * in volume order. `len` must equal the voxel count.
 *
 * # Safety
 * `model` and `volume` must come from this library; `labels` must be valid
 * for `len` writes.
 */
enum WemfStatus wemf_model_segment(const struct WemfModel *model,
                                   const struct WemfVolume *volume,
                                   uint8_t *labels,
                                   size_t len);

/**
 * # Safety
 * `model` must come from this library or be NULL, and not be used again.
 */
void wemf_model_free(struct WemfModel *model);

/**
 * Score two masks (nonzero = foreground) of `dims[0] * dims[1] * dims[2]`
 * voxels, x fastest.
 *
 * # Safety
 * `dims` and `spacing_mm` must hold 3 values, `pred` and `reference` the
 * full voxel count, and `out` must be valid for one write.
 */
enum WemfStatus wemf_evaluate_masks(const uint8_t *pred,
                                    const uint8_t *reference,
                                    const size_t *dims,
                                    const double *spacing_mm,
                                    double tau_mm,
                                    struct WemfMaskMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WEMF_H */
