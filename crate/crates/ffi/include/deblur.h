#ifndef DEBLUR_H
#define DEBLUR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum DbStatus {
  DB_STATUS_OK = 0,
  DB_STATUS_NULL_POINTER = 1,
  DB_STATUS_INVALID_ARGUMENT = 2,
  DB_STATUS_IO = 3,
  DB_STATUS_FORMAT = 4,
  DB_STATUS_UNSUPPORTED_FORMAT = 5,
  DB_STATUS_DIMENSION_MISMATCH = 6,
  DB_STATUS_NON_FINITE = 7,
  DB_STATUS_FIT_FAILED = 8,
  DB_STATUS_INVALID_UTF8 = 9,
  DB_STATUS_PANIC = 10,
} DbStatus;

// Encoding used by [`db_image_save`].
typedef enum DbFormat {
  DB_FORMAT_PNG8 = 0,
  DB_FORMAT_PNG16 = 1,
  DB_FORMAT_RAW_F32 = 2,
} DbFormat;

// An image: height × width × channels, interleaved f32 samples in [0, 1].
typedef struct DbImage DbImage;

// A trained restoration network.
typedef struct DbModel DbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *db_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *db_version(void);

// Copies `height * width * channels` samples from `data` into a new image.
//
// # Safety
// `data` must point to that many readable floats; `out` must be writable.
enum DbStatus db_image_new(size_t height,
                           size_t width,
                           size_t channels,
                           const float *data,
                           struct DbImage **out);

// Loads a PNG or raw f32 image.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DbStatus db_image_load(const char *path, struct DbImage **out);

// # Safety
// `img` must be a live handle; `path` a NUL-terminated string.
enum DbStatus db_image_save(const struct DbImage *img, const char *path, enum DbFormat format);

// Writes the image dimensions; any of the out-pointers may be null.
//
// # Safety
// `img` must be a live handle; non-null out-pointers must be writable.
enum DbStatus db_image_dims(const struct DbImage *img,
                            size_t *height,
                            size_t *width,
                            size_t *channels);

// Copies the interleaved samples into `dst`, which holds `len` floats.
// Fails with `DimensionMismatch` unless `len` equals the sample count.
//
// # Safety
// `img` must be a live handle; `dst` must hold `len` writable floats.
enum DbStatus db_image_copy_data(const struct DbImage *img, float *dst, size_t len);

// # Safety
// `img` must be null or a handle not yet freed.
void db_image_free(struct DbImage *img);

// Gaussian blur with standard deviation `sigma` pixels, replicate edges.
//
// # Safety
// `img` must be a live handle; `out` must be writable.
enum DbStatus db_blur(const struct DbImage *img, double sigma, struct DbImage **out);

// Blur followed by seeded additive Gaussian noise, clamped to [0, 1].
//
// # Safety
// `img` must be a live handle; `out` must be writable.
enum DbStatus db_blur_noise(const struct DbImage *img,
                            double sigma,
                            double noise_std,
                            uint64_t seed,
                            struct DbImage **out);

// Richardson-Lucy with a Gaussian PSF of width `sigma`.
//
// # Safety
// `img` must be a live handle; `out` must be writable.
enum DbStatus db_richardson_lucy(const struct DbImage *img,
                                 double sigma,
                                 size_t iterations,
                                 struct DbImage **out);

// Blind deconvolution seeded with a Gaussian of width `init_sigma`. If
// `estimated_sigma` is non-null it receives the width of the final PSF
// (of the last channel for colour input).
//
// # Safety
// `img` must be a live handle; `out` must be writable.
enum DbStatus db_blind_deconv(const struct DbImage *img,
                              double init_sigma,
                              size_t iterations,
                              struct DbImage **out,
                              double *estimated_sigma);

// Loads network weights.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DbStatus db_model_load(const char *path, struct DbModel **out);

// Blur σ (pixels) the model was trained for.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum DbStatus db_model_trained_sigma(const struct DbModel *model, double *out);

// # Safety
// `model` must be null or a handle not yet freed.
void db_model_free(struct DbModel *model);

// Restores `img` with the network, tiling at `tile` pixels with `overlap`
// pixels shared between neighbours (0 and 0 select 256 and no overlap).
//
// # Safety
// `model` and `img` must be live handles; `out` must be writable.
enum DbStatus db_deblur(const struct DbModel *model,
                        const struct DbImage *img,
                        size_t tile,
                        size_t overlap,
                        struct DbImage **out);

// Mean squared error over all samples.
//
// # Safety
// `a` and `b` must be live handles; `out` must be writable.
enum DbStatus db_mse(const struct DbImage *a, const struct DbImage *b, double *out);

// PSNR in dB for unit peak; +inf for identical images.
//
// # Safety
// `a` and `b` must be live handles; `out` must be writable.
enum DbStatus db_psnr(const struct DbImage *a, const struct DbImage *b, double *out);

// Mean structural similarity.
//
// # Safety
// `a` and `b` must be live handles; `out` must be writable.
enum DbStatus db_ssim(const struct DbImage *a, const struct DbImage *b, double *out);

// # Safety
// `out` must be writable.
enum DbStatus db_sigma_from_fwhm(double fwhm, double *out);

// # Safety
// `out` must be writable.
enum DbStatus db_fwhm_from_sigma(double sigma, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEBLUR_H */
