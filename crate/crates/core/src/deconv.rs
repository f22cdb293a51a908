//! Richardson-Lucy and alternating blind deconvolution baselines.
//!
//! Both operate on single-channel images (callers loop over channels) and
//! share the replicate-edge forward operator of [`crate::psf`].

use crate::error::{Error, Result};
use crate::image::Image;
use crate::psf::{convolve_plane, PsfKernel};

#[derive(Clone, Debug, PartialEq)]
pub struct DeconvConfig {
    pub iterations: usize,
    /// Lower bound on the predicted image in the ratio `I / (k ⊛ O)`.
    pub epsilon: f64,
    /// Clip negative estimates after every update.
    pub clamp_nonneg: bool,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        DeconvConfig {
            iterations: 20,
            epsilon: 1e-12,
            clamp_nonneg: true,
        }
    }
}

impl DeconvConfig {
    pub fn with_iterations(iterations: usize) -> Self {
        DeconvConfig {
            iterations,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// `observed / max(predicted, ε)` elementwise.
fn ratio(observed: &[f64], predicted: &[f64], eps: f64) -> Vec<f64> {
    observed
        .iter()
        .zip(predicted)
        .map(|(&i, &p)| i / p.max(eps))
        .collect()
}

/// One multiplicative image update:
/// `O ← O ⊙ (k^flip ⊛ (I ⊘ (k ⊛ O)))`.
fn rl_image_step(
    observed: &[f64],
    estimate: &mut [f64],
    h: usize,
    w: usize,
    psf: &PsfKernel,
    flipped: &PsfKernel,
    cfg: &DeconvConfig,
) {
    let predicted = convolve_plane(estimate, h, w, psf);
    let r = ratio(observed, &predicted, cfg.epsilon);
    let correction = convolve_plane(&r, h, w, flipped);
    for (o, c) in estimate.iter_mut().zip(&correction) {
        *o *= c;
        if cfg.clamp_nonneg && *o < 0.0 {
            *o = 0.0;
        }
    }
}

/// Richardson-Lucy iterations on a plane, starting from the observation.
pub fn richardson_lucy_plane(
    observed: &[f64],
    height: usize,
    width: usize,
    psf: &PsfKernel,
    cfg: &DeconvConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let flipped = psf.flipped();
    let mut estimate = observed.to_vec();
    for _ in 0..cfg.iterations {
        rl_image_step(observed, &mut estimate, height, width, psf, &flipped, cfg);
    }
    Ok(estimate)
}

/// Richardson-Lucy deconvolution with a known PSF. Output clamped to `[0, 1]`.
pub fn richardson_lucy(img: &Image, psf: &PsfKernel, cfg: &DeconvConfig) -> Result<Image> {
    img.require_single_channel()?;
    let out = richardson_lucy_plane(&img.plane(0), img.height(), img.width(), psf, cfg)?;
    Image::from_plane(img.height(), img.width(), &out)
}

/// PSF update holding the image fixed:
/// `k(i,j) ← k(i,j) · Σ_p ratio(p)·O(p − (i,j)) / Σ O`, then renormalized.
fn rl_psf_step(
    observed: &[f64],
    estimate: &[f64],
    h: usize,
    w: usize,
    psf: &PsfKernel,
    cfg: &DeconvConfig,
) -> Result<PsfKernel> {
    let predicted = convolve_plane(estimate, h, w, psf);
    let r = ratio(observed, &predicted, cfg.epsilon);
    let total: f64 = estimate.iter().sum::<f64>().max(cfg.epsilon);
    let radius = psf.radius() as isize;
    let mut values = Vec::with_capacity(psf.values().len());
    for di in -radius..=radius {
        for dj in -radius..=radius {
            let k = psf.at(di, dj);
            if k == 0.0 {
                values.push(0.0);
                continue;
            }
            let mut acc = 0.0;
            for y in 0..h {
                let sy = (y as isize - di).clamp(0, h as isize - 1) as usize;
                let est_row = &estimate[sy * w..(sy + 1) * w];
                let r_row = &r[y * w..(y + 1) * w];
                for (x, rv) in r_row.iter().enumerate() {
                    let sx = (x as isize - dj).clamp(0, w as isize - 1) as usize;
                    acc += rv * est_row[sx];
                }
            }
            values.push(k * acc / total);
        }
    }
    if values.iter().all(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument(
            "PSF estimate collapsed to zero".into(),
        ));
    }
    PsfKernel::from_values(psf.radius(), values)
}

/// Alternating blind deconvolution: per iteration one RL step on the image
/// with the PSF fixed, then one RL-form step on the PSF with the image
/// fixed, renormalizing the PSF to unit sum. The PSF support is that of
/// `psf_init`.
pub fn blind_deconv(
    img: &Image,
    psf_init: &PsfKernel,
    cfg: &DeconvConfig,
) -> Result<(Image, PsfKernel)> {
    img.require_single_channel()?;
    cfg.validate()?;
    let (h, w) = (img.height(), img.width());
    let observed = img.plane(0);
    let mut estimate = observed.clone();
    let mut psf = PsfKernel::from_values(psf_init.radius(), psf_init.values().to_vec())?;
    for _ in 0..cfg.iterations {
        let flipped = psf.flipped();
        rl_image_step(&observed, &mut estimate, h, w, &psf, &flipped, cfg);
        psf = rl_psf_step(&observed, &estimate, h, w, &psf, cfg)?;
    }
    Ok((Image::from_plane(h, w, &estimate)?, psf))
}
