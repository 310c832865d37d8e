#ifndef SFTIP_H
#define SFTIP_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum SftipStatus {
  SFTIP_STATUS_OK = 0,
  SFTIP_STATUS_NULL_POINTER = 1,
  SFTIP_STATUS_INVALID_ARGUMENT = 2,
  SFTIP_STATUS_SHAPE_MISMATCH = 3,
  SFTIP_STATUS_DEGENERATE = 4,
  SFTIP_STATUS_PANIC = 5,
} SftipStatus;

typedef enum SftipScene {
  SFTIP_SCENE_BAR_TARGET = 0,
  SFTIP_SCENE_CHECKERBOARD = 1,
  SFTIP_SCENE_FLAT = 2,
} SftipScene;

/**
 * Opaque real-valued 2-D field.
 */
typedef struct SftipField SftipField;

/**
 * Opaque outcome of [`sftip_run_solver`].
 */
typedef struct SftipResult SftipResult;

/**
 * Solver settings. Start from [`sftip_config_default`].
 */
typedef struct SftipConfig {
  /**
   * Patches per axis.
   */
  uint32_t grid_p;
  /**
   * PSF support side in pixels.
   */
  uint32_t support_s;
  uint32_t iters;
  /**
   * OTF-update regularization, relative to the mean patch power.
   */
  double eps_h;
  /**
   * Object-update regularization, relative to the mean OTF power.
   */
  double eps_o;
  uint64_t seed;
  /**
   * Shift-align PSF estimates to the ground truth before PSNR.
   */
  bool align;
} SftipConfig;

/**
 * One row of the convergence trace.
 */
typedef struct SftipIterationRecord {
  /**
   * 1-based.
   */
  uint32_t iteration;
  double residual;
  /**
   * NaN when the run had no ground-truth PSF.
   */
  double psf_psnr_db;
  /**
   * Cumulative count of PSF delta fallbacks.
   */
  uint32_t delta_fallbacks;
} SftipIterationRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *sftip_last_error_message(void);

struct SftipConfig sftip_config_default(void);

/**
 * Copies `width * height` samples from `data` into a new field.
 *
 * # Safety
 * `data` must point to `width * height` readable doubles and `out` must
 * be a valid pointer.
 */
enum SftipStatus sftip_field_new(size_t width,
                                 size_t height,
                                 const double *data,
                                 struct SftipField **out);

/**
 * Width of `field`, or 0 if it is null.
 *
 * # Safety
 * `field` must be null or a live handle.
 */
size_t sftip_field_width(const struct SftipField *field);

/**
 * Height of `field`, or 0 if it is null.
 *
 * # Safety
 * `field` must be null or a live handle.
 */
size_t sftip_field_height(const struct SftipField *field);

/**
 * Copies the samples of `field` into `dst`, which holds `len` doubles.
 * `len` must equal `width * height`.
 *
 * # Safety
 * `field` must be a live handle and `dst` must point to `len` writable
 * doubles.
 */
enum SftipStatus sftip_field_copy_data(const struct SftipField *field, double *dst, size_t len);

/**
 * Releases a field. Null is ignored.
 *
 * # Safety
 * `field` must be null or a handle not yet freed.
 */
void sftip_field_free(struct SftipField *field);

/**
 * Runs the solver on `image`. `truth_psf` may be null; when given, the
 * trace records PSF PSNR against it.
 *
 * # Safety
 * `image` and `config` must be valid, `truth_psf` null or valid, and
 * `out` a valid pointer.
 */
enum SftipStatus sftip_run_solver(const struct SftipField *image,
                                  const struct SftipConfig *config,
                                  const struct SftipField *truth_psf,
                                  struct SftipResult **out);

/**
 * New field holding the estimated PSF (centered, unit sum).
 *
 * # Safety
 * `result` must be a live handle and `out` a valid pointer.
 */
enum SftipStatus sftip_result_psf(const struct SftipResult *result, struct SftipField **out);

/**
 * New field holding the recovered object.
 *
 * # Safety
 * `result` must be a live handle and `out` a valid pointer.
 */
enum SftipStatus sftip_result_object(const struct SftipResult *result, struct SftipField **out);

/**
 * Number of trace records, or 0 if `result` is null.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t sftip_result_trace_len(const struct SftipResult *result);

/**
 * Copies trace record `index` (0-based) into `out`.
 *
 * # Safety
 * `result` must be a live handle and `out` a valid pointer.
 */
enum SftipStatus sftip_result_trace_record(const struct SftipResult *result,
                                           size_t index,
                                           struct SftipIterationRecord *out);

/**
 * Releases a result. Null is ignored.
 *
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void sftip_result_free(struct SftipResult *result);

/**
 * PSNR in dB of `estimate` against `truth`, optionally after shift
 * alignment.
 *
 * # Safety
 * `truth` and `estimate` must be live handles and `out_db` a valid pointer.
 */
enum SftipStatus sftip_psf_psnr(const struct SftipField *truth,
                                const struct SftipField *estimate,
                                bool align,
                                double *out_db);

/**
 * Simulates a square scene, a random Zernike aberration and the
 * resulting 16-bit observation. Any of the output pointers may be null
 * to skip that field.
 *
 * # Safety
 * Non-null output pointers must be valid.
 */
enum SftipStatus sftip_simulate(size_t size,
                                enum SftipScene scene,
                                uint32_t mode_count,
                                double sigma,
                                double pupil_fraction,
                                double noise_sigma,
                                uint64_t seed,
                                struct SftipField **out_scene,
                                struct SftipField **out_psf,
                                struct SftipField **out_image);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SFTIP_H */
