//! C ABI over the `deblur` crate.
//!
//! Every fallible function returns a [`DbStatus`]; on failure the message is
//! kept per thread and read with [`db_last_error_message`]. Objects are
//! opaque handles created by `db_*_new`/`db_*_load`/operations and released
//! with the matching `db_*_free`. Results are written through out-pointers
//! only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use deblur::deconv::{blind_deconv, richardson_lucy, DeconvConfig};
use deblur::image::{load_image, save_image, Image, SaveFormat};
use deblur::metrics::{mse, psnr, ssim};
use deblur::pipeline::{deblur_image, DeblurOptions};
use deblur::psf::{blur, blur_with_noise, default_radius, fwhm_from_sigma, make_gaussian_kernel, sigma_from_fwhm};
use deblur::rdn::{load_weights, RdnModel};
use deblur::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum DbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    UnsupportedFormat = 5,
    DimensionMismatch = 6,
    NonFinite = 7,
    FitFailed = 8,
    InvalidUtf8 = 9,
    Panic = 10,
}

/// Encoding used by [`db_image_save`].
#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum DbFormat {
    Png8 = 0,
    Png16 = 1,
    RawF32 = 2,
}

/// An image: height × width × channels, interleaved f32 samples in [0, 1].
pub struct DbImage {
    inner: Image,
}

/// A trained restoration network.
pub struct DbModel {
    inner: RdnModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(DbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => DbStatus::Io,
            Error::UnsupportedFormat(_) => DbStatus::UnsupportedFormat,
            Error::Format(_) => DbStatus::Format,
            Error::DimensionMismatch(_) => DbStatus::DimensionMismatch,
            Error::InvalidArgument(_) => DbStatus::InvalidArgument,
            Error::NonFinite(_) => DbStatus::NonFinite,
            Error::Fit(_) | Error::SideFit { .. } => DbStatus::FitFailed,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DbStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            DbStatus::Panic
        }
    }
}

unsafe fn image_ref<'a>(p: *const DbImage, what: &str) -> Result<&'a Image, Failure> {
    p.as_ref().map(|i| &i.inner).ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(DbStatus::InvalidUtf8, "path is not valid UTF-8".into()))
}

unsafe fn put_image(out: *mut *mut DbImage, img: Image) {
    *out = Box::into_raw(Box::new(DbImage { inner: img }));
}

unsafe fn put_f64(out: *mut f64, v: f64) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = v;
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(null("out"))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn db_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn db_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `height * width * channels` samples from `data` into a new image.
///
/// # Safety
/// `data` must point to that many readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_image_new(
    height: usize,
    width: usize,
    channels: usize,
    data: *const f32,
    out: *mut *mut DbImage,
) -> DbStatus {
    guard(|| {
        check_out(out)?;
        if data.is_null() {
            return Err(null("data"));
        }
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Failure(DbStatus::InvalidArgument, "image size overflows".into()))?;
        let samples = std::slice::from_raw_parts(data, n).to_vec();
        put_image(out, Image::new(height, width, channels, samples)?);
        Ok(())
    })
}

/// Loads a PNG or raw f32 image.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_image_load(path: *const c_char, out: *mut *mut DbImage) -> DbStatus {
    guard(|| {
        check_out(out)?;
        let img = load_image(path_arg(path)?)?;
        put_image(out, img);
        Ok(())
    })
}

/// # Safety
/// `img` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn db_image_save(img: *const DbImage, path: *const c_char, format: DbFormat) -> DbStatus {
    guard(|| {
        let img = image_ref(img, "image")?;
        let format = match format {
            DbFormat::Png8 => SaveFormat::Png8,
            DbFormat::Png16 => SaveFormat::Png16,
            DbFormat::RawF32 => SaveFormat::RawF32,
        };
        save_image(img, path_arg(path)?, format)?;
        Ok(())
    })
}

/// Writes the image dimensions; any of the out-pointers may be null.
///
/// # Safety
/// `img` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_image_dims(
    img: *const DbImage,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> DbStatus {
    guard(|| {
        let img = image_ref(img, "image")?;
        for (p, v) in [(height, img.height()), (width, img.width()), (channels, img.channels())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the interleaved samples into `dst`, which holds `len` floats.
/// Fails with `DimensionMismatch` unless `len` equals the sample count.
///
/// # Safety
/// `img` must be a live handle; `dst` must hold `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn db_image_copy_data(img: *const DbImage, dst: *mut f32, len: usize) -> DbStatus {
    guard(|| {
        let img = image_ref(img, "image")?;
        if dst.is_null() {
            return Err(null("dst"));
        }
        let data = img.data();
        if data.len() != len {
            return Err(Failure(
                DbStatus::DimensionMismatch,
                format!("buffer holds {len} floats, image has {}", data.len()),
            ));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), dst, len);
        Ok(())
    })
}

/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn db_image_free(img: *mut DbImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Gaussian blur with standard deviation `sigma` pixels, replicate edges.
///
/// # Safety
/// `img` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_blur(img: *const DbImage, sigma: f64, out: *mut *mut DbImage) -> DbStatus {
    guard(|| {
        check_out(out)?;
        put_image(out, blur(image_ref(img, "image")?, sigma)?);
        Ok(())
    })
}

/// Blur followed by seeded additive Gaussian noise, clamped to [0, 1].
///
/// # Safety
/// `img` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_blur_noise(
    img: *const DbImage,
    sigma: f64,
    noise_std: f64,
    seed: u64,
    out: *mut *mut DbImage,
) -> DbStatus {
    guard(|| {
        check_out(out)?;
        put_image(out, blur_with_noise(image_ref(img, "image")?, sigma, noise_std, seed)?);
        Ok(())
    })
}

/// Richardson-Lucy with a Gaussian PSF of width `sigma`.
///
/// # Safety
/// `img` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_richardson_lucy(
    img: *const DbImage,
    sigma: f64,
    iterations: usize,
    out: *mut *mut DbImage,
) -> DbStatus {
    guard(|| {
        check_out(out)?;
        let img = image_ref(img, "image")?;
        let psf = make_gaussian_kernel(sigma, default_radius(sigma))?;
        let cfg = DeconvConfig::with_iterations(iterations);
        put_image(out, img.map_channels(|c| richardson_lucy(c, &psf, &cfg))?);
        Ok(())
    })
}

/// Blind deconvolution seeded with a Gaussian of width `init_sigma`. If
/// `estimated_sigma` is non-null it receives the width of the final PSF
/// (of the last channel for colour input).
///
/// # Safety
/// `img` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_blind_deconv(
    img: *const DbImage,
    init_sigma: f64,
    iterations: usize,
    out: *mut *mut DbImage,
    estimated_sigma: *mut f64,
) -> DbStatus {
    guard(|| {
        check_out(out)?;
        let img = image_ref(img, "image")?;
        let init = make_gaussian_kernel(init_sigma, default_radius(init_sigma))?;
        let cfg = DeconvConfig::with_iterations(iterations);
        let mut est = f64::NAN;
        let restored = img.map_channels(|c| {
            let (o, k) = blind_deconv(c, &init, &cfg)?;
            est = k.sigma();
            Ok(o)
        })?;
        if !estimated_sigma.is_null() {
            *estimated_sigma = est;
        }
        put_image(out, restored);
        Ok(())
    })
}

/// Loads network weights.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_model_load(path: *const c_char, out: *mut *mut DbModel) -> DbStatus {
    guard(|| {
        check_out(out)?;
        let model = load_weights(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(DbModel { inner: model }));
        Ok(())
    })
}

/// Blur σ (pixels) the model was trained for.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_model_trained_sigma(model: *const DbModel, out: *mut f64) -> DbStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        put_f64(out, model.inner.meta.trained_sigma as f64)
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn db_model_free(model: *mut DbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Restores `img` with the network, tiling at `tile` pixels with `overlap`
/// pixels shared between neighbours (0 and 0 select 256 and no overlap).
///
/// # Safety
/// `model` and `img` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_deblur(
    model: *const DbModel,
    img: *const DbImage,
    tile: usize,
    overlap: usize,
    out: *mut *mut DbImage,
) -> DbStatus {
    guard(|| {
        check_out(out)?;
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let img = image_ref(img, "image")?;
        let mut opts = DeblurOptions::default();
        if tile != 0 {
            opts.tile = tile;
        }
        opts.overlap = overlap;
        put_image(out, deblur_image(&model.inner, img, &opts)?);
        Ok(())
    })
}

fn metric(
    a: *const DbImage,
    b: *const DbImage,
    out: *mut f64,
    f: fn(&Image, &Image) -> deblur::Result<f64>,
) -> DbStatus {
    guard(|| unsafe {
        let v = f(image_ref(a, "a")?, image_ref(b, "b")?)?;
        put_f64(out, v)
    })
}

/// Mean squared error over all samples.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_mse(a: *const DbImage, b: *const DbImage, out: *mut f64) -> DbStatus {
    metric(a, b, out, mse)
}

/// PSNR in dB for unit peak; +inf for identical images.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_psnr(a: *const DbImage, b: *const DbImage, out: *mut f64) -> DbStatus {
    metric(a, b, out, psnr)
}

/// Mean structural similarity.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_ssim(a: *const DbImage, b: *const DbImage, out: *mut f64) -> DbStatus {
    metric(a, b, out, ssim)
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_sigma_from_fwhm(fwhm: f64, out: *mut f64) -> DbStatus {
    guard(|| put_f64(out, sigma_from_fwhm(fwhm)?))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn db_fwhm_from_sigma(sigma: f64, out: *mut f64) -> DbStatus {
    guard(|| put_f64(out, fwhm_from_sigma(sigma)?))
}
