//! Resolution measurement from a blade-edge profile.
//!
//! The edge spread function is modelled as a scaled Gaussian CDF,
//! `f(x) = baseline + amplitude·Φ((x − center)/σ)`. Its derivative, the line
//! spread function, is a Gaussian of the same σ, so the resolution is
//! `FWHM = 2.3548·σ` in the profile's position units.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, FitError, Result};
use crate::image::Image;
use crate::psf::FWHM_PER_SIGMA;

const MIN_SAMPLES: usize = 8;
const MAX_ITERATIONS: usize = 200;
const REL_TOL: f64 = 1e-8;
/// Fits narrower than this fraction of the mean sample spacing are reported
/// as unresolved rather than as a number.
const MIN_SIGMA_SPACING: f64 = 0.25;
const MAX_RELATIVE_RMS: f64 = 0.2;

/// Sampled edge spread function: strictly increasing positions with one
/// amplitude each.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeProfile {
    positions: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl EdgeProfile {
    pub fn new(positions: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if positions.len() != amplitudes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} positions but {} amplitudes",
                positions.len(),
                amplitudes.len()
            )));
        }
        if positions.len() < MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "edge profile needs at least {MIN_SAMPLES} samples, got {}",
                positions.len()
            )));
        }
        if positions.iter().chain(&amplitudes).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("edge profile contains NaN or inf".into()));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "edge profile positions must be strictly increasing".into(),
            ));
        }
        Ok(EdgeProfile {
            positions,
            amplitudes,
        })
    }

    /// One image row; position `x · pixel_pitch`.
    pub fn from_image_row(img: &Image, row: usize, channel: usize, pixel_pitch: f64) -> Result<Self> {
        if row >= img.height() || channel >= img.channels() {
            return Err(Error::InvalidArgument(format!(
                "row {row} / channel {channel} outside {:?} image",
                img.dims()
            )));
        }
        if !(pixel_pitch > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pixel pitch must be positive, got {pixel_pitch}"
            )));
        }
        let positions = (0..img.width()).map(|x| x as f64 * pixel_pitch).collect();
        let amplitudes = (0..img.width())
            .map(|x| img.get(row, x, channel) as f64)
            .collect();
        EdgeProfile::new(positions, amplitudes)
    }

    /// Parses `position_um,amplitude` rows. A non-numeric first line is
    /// treated as a header; `#` starts a comment.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut positions = Vec::new();
        let mut amplitudes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let (p, a) = match (fields.next(), fields.next()) {
                (Some(p), Some(a)) => (p, a),
                _ => {
                    return Err(Error::Format(format!(
                        "line {}: expected two comma-separated columns",
                        lineno + 1
                    )))
                }
            };
            match (p.parse::<f64>(), a.parse::<f64>()) {
                (Ok(p), Ok(a)) => {
                    positions.push(p);
                    amplitudes.push(a);
                }
                _ if positions.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(Error::Format(format!(
                        "line {}: cannot parse {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        EdgeProfile::new(positions, amplitudes)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        EdgeProfile::from_csv_str(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("position_um,amplitude\n");
        for (p, a) in self.positions.iter().zip(&self.amplitudes) {
            let _ = writeln!(out, "{p},{a}");
        }
        out
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn mean_spacing(&self) -> f64 {
        (self.positions[self.len() - 1] - self.positions[0]) / (self.len() - 1) as f64
    }
}

/// Least-squares ESF fit. `fwhm` is the LSF width in position units.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeFit {
    pub baseline: f64,
    pub amplitude: f64,
    pub center: f64,
    pub sigma: f64,
    pub fwhm: f64,
    /// Euclidean norm of the fit residuals.
    pub residual_norm: f64,
    pub iterations: usize,
}

impl EdgeFit {
    /// Evaluates the fitted line spread function at `x`.
    pub fn lsf(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.sigma;
        self.amplitude * std_normal_pdf(z) / self.sigma
    }

    pub fn esf(&self, x: f64) -> f64 {
        self.baseline + self.amplitude * std_normal_cdf((x - self.center) / self.sigma)
    }

    pub fn csv_header() -> &'static str {
        "sigma,fwhm,residual_norm"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.sigma, self.fwhm, self.residual_norm)
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Clone, Copy, Debug)]
struct Params {
    baseline: f64,
    amplitude: f64,
    center: f64,
    sigma: f64,
}

impl Params {
    fn as_array(&self) -> [f64; 4] {
        [self.baseline, self.amplitude, self.center, self.sigma]
    }

    fn from_array(p: [f64; 4]) -> Self {
        Params {
            baseline: p[0],
            amplitude: p[1],
            center: p[2],
            sigma: p[3],
        }
    }
}

fn sse(profile: &EdgeProfile, p: &Params) -> f64 {
    profile
        .positions
        .iter()
        .zip(&profile.amplitudes)
        .map(|(&x, &y)| {
            let r = p.baseline + p.amplitude * std_normal_cdf((x - p.center) / p.sigma) - y;
            r * r
        })
        .sum()
}

/// For fixed center and sigma the model is linear in (baseline, amplitude);
/// solve that 2x2 least-squares problem and return the SSE.
fn linear_fit(profile: &EdgeProfile, center: f64, sigma: f64) -> Option<(Params, f64)> {
    let n = profile.len() as f64;
    let (mut s_phi, mut s_phi2, mut s_y, mut s_phiy) = (0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in profile.positions.iter().zip(&profile.amplitudes) {
        let phi = std_normal_cdf((x - center) / sigma);
        s_phi += phi;
        s_phi2 += phi * phi;
        s_y += y;
        s_phiy += phi * y;
    }
    let det = n * s_phi2 - s_phi * s_phi;
    if det.abs() < 1e-12 * n * n {
        return None;
    }
    let amplitude = (n * s_phiy - s_phi * s_y) / det;
    let baseline = (s_y - amplitude * s_phi) / n;
    let p = Params {
        baseline,
        amplitude,
        center,
        sigma,
    };
    Some((p, sse(profile, &p)))
}

fn grid_initialize(profile: &EdgeProfile) -> Option<Params> {
    let first = profile.positions[0];
    let span = profile.positions[profile.len() - 1] - first;
    let spacing = profile.mean_spacing();
    const CENTERS: usize = 64;
    const SIGMAS: usize = 40;
    let (s_lo, s_hi) = (0.1 * spacing, 0.5 * span);
    let mut best: Option<(Params, f64)> = None;
    for ci in 0..=CENTERS {
        let center = first + span * ci as f64 / CENTERS as f64;
        for si in 0..SIGMAS {
            let sigma = s_lo * (s_hi / s_lo).powf(si as f64 / (SIGMAS - 1) as f64);
            if let Some((p, e)) = linear_fit(profile, center, sigma) {
                if best.as_ref().is_none_or(|(_, b)| e < *b) {
                    best = Some((p, e));
                }
            }
        }
    }
    best.map(|(p, _)| p)
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut s = b[row];
        for k in row + 1..4 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Gauss-Newton refinement with step halving. Returns the refined
/// parameters and the number of iterations used.
fn gauss_newton(profile: &EdgeProfile, start: Params) -> Result<(Params, usize), FitError> {
    let mut p = start;
    let mut cost = sse(profile, &p);
    for iter in 1..=MAX_ITERATIONS {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&x, &y) in profile.positions.iter().zip(&profile.amplitudes) {
            let z = (x - p.center) / p.sigma;
            let phi = std_normal_cdf(z);
            let pdf = std_normal_pdf(z);
            let r = p.baseline + p.amplitude * phi - y;
            let j = [
                1.0,
                phi,
                -p.amplitude * pdf / p.sigma,
                -p.amplitude * pdf * z / p.sigma,
            ];
            for a in 0..4 {
                jtr[a] += j[a] * r;
                for b in 0..4 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        // Scale-aware ridge keeps the system solvable when σ collapses.
        for (a, row) in jtj.iter_mut().enumerate() {
            row[a] += 1e-12 * row[a].max(1e-300);
        }
        let Some(delta) = solve4(jtj, jtr.map(|v| -v)) else {
            return Ok((p, iter));
        };

        let current = p.as_array();
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-10 {
            let mut trial = current;
            for k in 0..4 {
                trial[k] += step * delta[k];
            }
            if trial[3] > 0.0 {
                let t = Params::from_array(trial);
                let c = sse(profile, &t);
                if c <= cost {
                    accepted = Some((t, c));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, next_cost)) = accepted else {
            // No descent direction left: at a minimum up to rounding.
            return Ok((p, iter));
        };
        let rel_change = (0..4)
            .map(|k| {
                let scale = current[k].abs().max(profile.mean_spacing() * 1e-6);
                (step * delta[k]).abs() / scale
            })
            .fold(0.0, f64::max);
        p = next;
        cost = next_cost;
        if rel_change < REL_TOL {
            return Ok((p, iter));
        }
    }
    Err(FitError::NoConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// Fits an ESF to the profile and returns the LSF FWHM.
pub fn estimate_fwhm_from_edge(profile: &EdgeProfile) -> Result<EdgeFit, FitError> {
    let (lo, hi) = profile
        .amplitudes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return Err(FitError::Flat);
    }
    let start = grid_initialize(profile).ok_or(FitError::Flat)?;
    let (p, iterations) = gauss_newton(profile, start)?;

    let residual_norm = sse(profile, &p).sqrt();
    let relative_rms = (residual_norm / (profile.len() as f64).sqrt()) / p.amplitude.abs().max(1e-300);
    if p.amplitude.abs() < 1e-3 * (hi - lo) || relative_rms > MAX_RELATIVE_RMS {
        return Err(FitError::NotAnEdge { relative_rms });
    }
    if p.sigma < MIN_SIGMA_SPACING * profile.mean_spacing() {
        return Err(FitError::BelowResolution { sigma: p.sigma });
    }
    Ok(EdgeFit {
        baseline: p.baseline,
        amplitude: p.amplitude,
        center: p.center,
        sigma: p.sigma,
        fwhm: FWHM_PER_SIGMA * p.sigma,
        residual_norm,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn analytic_edge(sigma: f64, spacing: f64, half_span: f64) -> (Vec<f64>, Vec<f64>) {
        let n = (2.0 * half_span / spacing) as usize + 1;
        let xs: Vec<f64> = (0..n).map(|i| -half_span + i as f64 * spacing).collect();
        let ys = xs
            .iter()
            .map(|&x| 0.1 + 0.8 * std_normal_cdf((x - 0.37) / sigma))
            .collect();
        (xs, ys)
    }

    #[test]
    fn noiseless_edge_recovers_fwhm() {
        let (xs, ys) = analytic_edge(3.0, 0.5, 20.0);
        let fit = estimate_fwhm_from_edge(&EdgeProfile::new(xs, ys).unwrap()).unwrap();
        let expected = 2.0 * (2.0 * 2f64.ln()).sqrt() * 3.0;
        assert!((expected - 7.064).abs() < 1e-3);
        assert!((fit.fwhm - expected).abs() / expected < 0.01, "{fit:?}");
        assert!((fit.center - 0.37).abs() < 1e-3);
        assert!(fit.residual_norm < 1e-6);
    }

    #[test]
    fn falling_edge_fits_with_negative_amplitude() {
        let (xs, ys) = analytic_edge(2.0, 0.5, 15.0);
        let ys: Vec<f64> = ys.iter().map(|y| 1.0 - y).collect();
        let fit = estimate_fwhm_from_edge(&EdgeProfile::new(xs, ys).unwrap()).unwrap();
        assert!(fit.amplitude < 0.0);
        assert!((fit.sigma - 2.0).abs() < 0.02);
    }

    #[test]
    fn averaged_noisy_edge_within_five_percent() {
        let (xs, clean) = analytic_edge(3.0, 0.5, 20.0);
        let noise = Normal::new(0.0, 0.01 * 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut avg = vec![0.0; clean.len()];
        for _ in 0..100 {
            for (a, c) in avg.iter_mut().zip(&clean) {
                *a += (c + noise.sample(&mut rng)) / 100.0;
            }
        }
        let fit = estimate_fwhm_from_edge(&EdgeProfile::new(xs, avg).unwrap()).unwrap();
        let expected = FWHM_PER_SIGMA * 3.0;
        assert!((fit.fwhm - expected).abs() / expected < 0.05, "{fit:?}");
    }

    #[test]
    fn sharp_step_is_below_resolution() {
        let xs: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let ys = xs.iter().map(|&x| if x < 15.5 { 0.0 } else { 1.0 }).collect();
        let err = estimate_fwhm_from_edge(&EdgeProfile::new(xs, ys).unwrap()).unwrap_err();
        assert!(matches!(err, FitError::BelowResolution { .. }), "{err:?}");
    }

    #[test]
    fn flat_and_bump_profiles_fail_cleanly() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let flat = EdgeProfile::new(xs.clone(), vec![0.4; 20]).unwrap();
        assert_eq!(estimate_fwhm_from_edge(&flat).unwrap_err(), FitError::Flat);

        let bump: Vec<f64> = xs.iter().map(|&x| (-(x - 10.0).powi(2) / 4.0).exp()).collect();
        let err = estimate_fwhm_from_edge(&EdgeProfile::new(xs, bump).unwrap()).unwrap_err();
        assert!(matches!(err, FitError::NotAnEdge { .. }), "{err:?}");
    }

    #[test]
    fn profile_validation() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert!(EdgeProfile::new(xs[..7].to_vec(), vec![0.0; 7]).is_err());
        let mut bad = xs.clone();
        bad[3] = bad[2];
        assert!(EdgeProfile::new(bad, vec![0.0; 8]).is_err());
        assert!(EdgeProfile::new(xs, vec![0.0; 7]).is_err());
    }

    #[test]
    fn csv_round_trip_with_header() {
        let (xs, ys) = analytic_edge(1.0, 1.0, 6.0);
        let p = EdgeProfile::new(xs, ys).unwrap();
        let parsed = EdgeProfile::from_csv_str(&p.to_csv()).unwrap();
        assert_eq!(parsed, p);
        assert!(EdgeProfile::from_csv_str("a,b\n1,2\nx,y\n").is_err());
    }
}
