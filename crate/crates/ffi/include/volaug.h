#ifndef VOLAUG_H
#define VOLAUG_H

/* Generated by cbindgen from crates/ffi/src; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define VOLAUG_MODALITY_CT 0

#define VOLAUG_MODALITY_MR 1

typedef enum {
  VOLAUG_STATUS_OK = 0,
  VOLAUG_STATUS_NULL_POINTER = 1,
  VOLAUG_STATUS_INVALID_ARGUMENT = 2,
  VOLAUG_STATUS_DIM_MISMATCH = 3,
  VOLAUG_STATUS_IO = 4,
  VOLAUG_STATUS_FORMAT = 5,
  VOLAUG_STATUS_CONFIG_MISMATCH = 6,
  VOLAUG_STATUS_UNDEFINED_METRIC = 7,
  VOLAUG_STATUS_PANIC = 8,
} VolaugStatus;

/**
 * Fitted source cumulative histogram.
 */
typedef struct VolaugHistogram VolaugHistogram;

/**
 * 16-bit label map.
 */
typedef struct VolaugLabels VolaugLabels;

/**
 * Float image.
 */
typedef struct VolaugVolume VolaugVolume;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty after a success.
 * Valid until the next call on this thread.
 */
const char *volaug_last_error(void);

/**
 * Library version, static storage.
 */
const char *volaug_version(void);

void volaug_string_free(char *s);

/**
 * Copies `len` floats (x fastest) into a new volume.
 */
VolaugStatus volaug_volume_new(const size_t *dims,
                               const double *spacing,
                               const float *data,
                               size_t len,
                               VolaugVolume **out);

VolaugStatus volaug_volume_load(const char *path, VolaugVolume **out);

VolaugStatus volaug_volume_save(const VolaugVolume *vol, const char *path);

void volaug_volume_free(VolaugVolume *vol);

/**
 * Writes three extents to `out_dims`.
 */
VolaugStatus volaug_volume_dims(const VolaugVolume *vol, size_t *out_dims);

/**
 * Writes three spacings (mm) to `out_spacing`.
 */
VolaugStatus volaug_volume_spacing(const VolaugVolume *vol, double *out_spacing);

/**
 * Voxel count; 0 for NULL.
 */
size_t volaug_volume_len(const VolaugVolume *vol);

/**
 * Borrowed view of the voxel data, valid while the handle lives.
 */
const float *volaug_volume_data(const VolaugVolume *vol);

/**
 * CT scaling or MR percentile normalisation.
 */
VolaugStatus volaug_normalize(const VolaugVolume *vol, uint32_t modality, VolaugVolume **out);

/**
 * Clip to the modality's matching range.
 */
VolaugStatus volaug_preclip(const VolaugVolume *vol, uint32_t modality, VolaugVolume **out);

VolaugStatus volaug_labels_new(const size_t *dims,
                               const double *spacing,
                               const uint16_t *data,
                               size_t len,
                               VolaugLabels **out);

VolaugStatus volaug_labels_load(const char *path, VolaugLabels **out);

VolaugStatus volaug_labels_save(const VolaugLabels *labels, const char *path);

void volaug_labels_free(VolaugLabels *labels);

VolaugStatus volaug_labels_dims(const VolaugLabels *labels, size_t *out_dims);

size_t volaug_labels_len(const VolaugLabels *labels);

/**
 * Borrowed view of the label data, valid while the handle lives.
 */
const uint16_t *volaug_labels_data(const VolaugLabels *labels);

/**
 * Augments one pair with the generator for sample `sample` of `seed`; the
 * same pair the CLI writes as sample `sample`.
 */
VolaugStatus volaug_augment(const VolaugVolume *image,
                            const VolaugLabels *labels,
                            const char *config_toml,
                            uint64_t seed,
                            uint64_t sample,
                            VolaugVolume **out_image,
                            VolaugLabels **out_labels);

/**
 * Averages the cumulative histograms of `n` volumes. Inputs are used as
 * given; clip them with [`volaug_preclip`] first to match the CLI.
 */
VolaugStatus volaug_fit_hist(const VolaugVolume *const *volumes,
                             size_t n,
                             const char *config_toml,
                             VolaugHistogram **out);

/**
 * Maps `vol` onto the histogram, using the histogram's own settings.
 */
VolaugStatus volaug_apply_sm(const VolaugVolume *vol,
                             const VolaugHistogram *hist,
                             VolaugVolume **out);

VolaugStatus volaug_hist_load(const char *path, VolaugHistogram **out);

VolaugStatus volaug_hist_save(const VolaugHistogram *hist, const char *path);

/**
 * Histogram file contents as a new string.
 */
VolaugStatus volaug_hist_to_json(const VolaugHistogram *hist, char **out_json);

void volaug_hist_free(VolaugHistogram *hist);

/**
 * Metric report JSON, identical to the CLI's `evaluate` output.
 */
VolaugStatus volaug_evaluate(const VolaugLabels *pred, const VolaugLabels *gt, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLAUG_H */
