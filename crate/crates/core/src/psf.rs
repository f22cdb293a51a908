//! Gaussian point-spread-function model and the blur it produces.
//!
//! The observed image is the object convolved with an isotropic Gaussian
//! `G(x, y) = exp(-(x² + y²) / 2σ²) / 2πσ²`, discretized at integer pixel
//! offsets and renormalized. Borders use replicate-edge extension.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Image;

/// `2·√(2·ln 2)`: FWHM of a Gaussian in units of its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Discrete, normalized 2-D kernel on a `(2r+1)²` grid, row-major with the
/// center at `(radius, radius)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsfKernel {
    sigma: f64,
    radius: usize,
    values: Vec<f64>,
}

impl PsfKernel {
    /// Kernel from arbitrary non-negative weights; renormalized to sum 1.
    /// `sigma` is set from the second moment.
    pub fn from_values(radius: usize, values: Vec<f64>) -> Result<Self> {
        let side = 2 * radius + 1;
        if values.len() != side * side {
            return Err(Error::DimensionMismatch(format!(
                "radius {radius} kernel needs {} weights, got {}",
                side * side,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "kernel weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidArgument("kernel weights are all zero".into()));
        }
        let mut k = PsfKernel {
            sigma: 0.0,
            radius,
            values: values.into_iter().map(|v| v / sum).collect(),
        };
        k.sigma = (k.second_moment() / 2.0).sqrt();
        Ok(k)
    }

    /// Radius-1 identity kernel.
    pub fn delta() -> Self {
        let mut values = vec![0.0; 9];
        values[4] = 1.0;
        PsfKernel {
            sigma: 0.0,
            radius: 1,
            values,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Weight at offset `(dy, dx)` from the center.
    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius as isize;
        if dy.abs() > r || dx.abs() > r {
            return 0.0;
        }
        self.values[((dy + r) * (2 * r + 1) + dx + r) as usize]
    }

    /// Point-reflected kernel `k(-y, -x)`.
    pub fn flipped(&self) -> PsfKernel {
        let mut values = self.values.clone();
        values.reverse();
        PsfKernel {
            sigma: self.sigma,
            radius: self.radius,
            values,
        }
    }

    /// `Σ k(y, x)·(y² + x²)`; equals `2σ²` for an untruncated Gaussian.
    pub fn second_moment(&self) -> f64 {
        let r = self.radius as isize;
        let mut m = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                m += self.at(dy, dx) * (dy * dy + dx * dx) as f64;
            }
        }
        m
    }
}

/// Truncation radius used by [`blur`]: `⌈4σ⌉`, at least 1.
pub fn default_radius(sigma: f64) -> usize {
    ((4.0 * sigma).ceil() as usize).max(1)
}

pub fn make_gaussian_kernel(sigma: f64, radius: usize) -> Result<PsfKernel> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if radius == 0 {
        return Err(Error::InvalidArgument("kernel radius must be at least 1".into()));
    }
    let profile = gaussian_1d(sigma, radius);
    let values = profile
        .iter()
        .flat_map(|&gy| profile.iter().map(move |&gx| gy * gx))
        .collect();
    Ok(PsfKernel {
        sigma,
        radius,
        values,
    })
}

/// Normalized 1-D Gaussian taps at offsets `-radius..=radius`. The outer
/// product of two of these is exactly the normalized 2-D kernel.
fn gaussian_1d(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Same-size convolution of a plane, `out(y,x) = Σ k(i,j)·src(y-i, x-j)`,
/// with replicate-edge borders. No clamping.
pub fn convolve_plane(src: &[f64], height: usize, width: usize, kernel: &PsfKernel) -> Vec<f64> {
    assert_eq!(src.len(), height * width, "plane size mismatch");
    let r = kernel.radius;
    let side = kernel.side();
    let pw = width + 2 * r;
    let padded = pad_plane(src, height, width, r);

    let mut out = vec![0.0; height * width];
    for i in 0..side {
        for j in 0..side {
            let k = kernel.values[i * side + j];
            if k == 0.0 {
                continue;
            }
            // src(y - (i - r), x - (j - r)) lives at padded(y + 2r - i, x + 2r - j).
            let (row_off, col_off) = (2 * r - i, 2 * r - j);
            for y in 0..height {
                let src_row = &padded[(y + row_off) * pw + col_off..][..width];
                let dst = &mut out[y * width..(y + 1) * width];
                for (d, s) in dst.iter_mut().zip(src_row) {
                    *d += k * s;
                }
            }
        }
    }
    out
}

fn pad_plane(src: &[f64], height: usize, width: usize, r: usize) -> Vec<f64> {
    let pw = width + 2 * r;
    let mut padded = Vec::with_capacity((height + 2 * r) * pw);
    for py in 0..height + 2 * r {
        let sy = py.saturating_sub(r).min(height - 1);
        let row = &src[sy * width..(sy + 1) * width];
        padded.extend(std::iter::repeat_n(row[0], r));
        padded.extend_from_slice(row);
        padded.extend(std::iter::repeat_n(row[width - 1], r));
    }
    padded
}

/// Separable Gaussian blur of one plane; same result as [`convolve_plane`]
/// with [`make_gaussian_kernel`] up to rounding.
pub fn gaussian_blur_plane(src: &[f64], height: usize, width: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let radius = default_radius(sigma);
    let taps = gaussian_1d(sigma, radius);
    let r = radius as isize;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut horiz = vec![0.0; height * width];
    let mut line = vec![0.0; width + 2 * radius];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for (p, l) in line.iter_mut().enumerate() {
            *l = row[clampi(p as isize - r, width)];
        }
        let dst = &mut horiz[y * width..(y + 1) * width];
        for (t, &k) in taps.iter().enumerate() {
            // tap index t corresponds to offset t - r; src(x - (t - r)) = line[x + 2r - t].
            let shift = 2 * radius - t;
            for (d, s) in dst.iter_mut().zip(&line[shift..shift + width]) {
                *d += k * s;
            }
        }
    }

    let mut out = vec![0.0; height * width];
    for (t, &k) in taps.iter().enumerate() {
        let off = t as isize - r;
        for y in 0..height {
            let sy = clampi(y as isize - off, height);
            let src_row = &horiz[sy * width..(sy + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += k * s;
            }
        }
    }
    Ok(out)
}

/// Convolves a single-channel image; the result is clamped to `[0, 1]`.
pub fn convolve2d(img: &Image, psf: &PsfKernel) -> Result<Image> {
    img.require_single_channel()?;
    let out = convolve_plane(&img.plane(0), img.height(), img.width(), psf);
    Image::from_plane(img.height(), img.width(), &out)
}

/// Per-channel Gaussian blur with truncation radius `⌈4σ⌉`.
pub fn blur(img: &Image, sigma: f64) -> Result<Image> {
    img.map_channels(|plane| {
        let out = gaussian_blur_plane(&plane.plane(0), plane.height(), plane.width(), sigma)?;
        Image::from_plane(plane.height(), plane.width(), &out)
    })
}

/// [`blur`] followed by additive zero-mean Gaussian noise of standard
/// deviation `noise_std`, clamped to `[0, 1]`.
pub fn blur_with_noise(img: &Image, sigma: f64, noise_std: f64, seed: u64) -> Result<Image> {
    let blurred = blur(img, sigma)?;
    if noise_std == 0.0 {
        return Ok(blurred);
    }
    let normal = Normal::new(0.0, noise_std)
        .map_err(|e| Error::InvalidArgument(format!("noise std {noise_std}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, c) = blurred.dims();
    let data = blurred
        .data()
        .iter()
        .map(|&v| crate::image::clamp_unit(v as f64 + normal.sample(&mut rng)))
        .collect();
    Image::new(h, w, c, data)
}

pub fn fwhm_from_sigma(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(FWHM_PER_SIGMA * sigma)
}

pub fn sigma_from_fwhm(fwhm: f64) -> Result<f64> {
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "FWHM must be positive, got {fwhm}"
        )));
    }
    Ok(fwhm / FWHM_PER_SIGMA)
}

/// Imaging-system parameters for the diffraction-limited FWHM estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpticalParams {
    wavelength_nm: f64,
    numerical_aperture: f64,
    pixel_pitch_um: f64,
}

impl OpticalParams {
    pub fn new(wavelength_nm: f64, numerical_aperture: f64, pixel_pitch_um: f64) -> Result<Self> {
        if !(wavelength_nm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "wavelength must be positive, got {wavelength_nm}"
            )));
        }
        if !(numerical_aperture > 0.0 && numerical_aperture <= 1.5) {
            return Err(Error::InvalidArgument(format!(
                "numerical aperture must be in (0, 1.5], got {numerical_aperture}"
            )));
        }
        if !(pixel_pitch_um > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pixel pitch must be positive, got {pixel_pitch_um}"
            )));
        }
        Ok(OpticalParams {
            wavelength_nm,
            numerical_aperture,
            pixel_pitch_um,
        })
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    pub fn numerical_aperture(&self) -> f64 {
        self.numerical_aperture
    }

    pub fn pixel_pitch_um(&self) -> f64 {
        self.pixel_pitch_um
    }
}

/// Lateral FWHM `0.51·λ/NA`, in micrometers.
pub fn fwhm_from_optics(params: &OpticalParams) -> f64 {
    0.51 * params.wavelength_nm / params.numerical_aperture / 1000.0
}

/// [`fwhm_from_optics`] expressed in pixels of the given pitch.
pub fn fwhm_from_optics_px(params: &OpticalParams) -> f64 {
    fwhm_from_optics(params) / params.pixel_pitch_um
}
