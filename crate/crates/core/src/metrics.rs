//! MSE, PSNR and SSIM with a peak value of 1, and comparison reports.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::Image;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.require_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(1/mse)`; `+∞` when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Peak signal-to-noise ratio in dB. Identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable "valid" filtering: output is `(h-10) x (w-10)`.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().zip(&src[y * w + x..]).map(|(t, s)| t * s).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (t, &k) in taps.iter().enumerate() {
            let row = &horiz[(y + t) * ow..(y + t + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(row) {
                *o += k * v;
            }
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let taps = ssim_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    };
    let mu_a = filter_valid(a, h, w, &taps);
    let mu_b = filter_valid(b, h, w, &taps);
    let e_aa = filter_valid(&prod(&|x, _| x * x), h, w, &taps);
    let e_bb = filter_valid(&prod(&|_, y| y * y), h, w, &taps);
    let e_ab = filter_valid(&prod(&|x, y| x * y), h, w, &taps);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    total / n as f64
}

/// Mean SSIM over all valid 11x11 Gaussian windows (σ = 1.5, K1 = 0.01,
/// K2 = 0.03, L = 1). Multi-channel images average the per-channel values.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.require_same_shape(b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::DimensionMismatch(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    if a == b {
        return Ok(1.0);
    }
    let channels = a.channels();
    let sum: f64 = (0..channels)
        .map(|c| ssim_plane(&a.plane(c), &b.plane(c), a.height(), a.width()))
        .sum();
    Ok(sum / channels as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsEntry {
    pub method: String,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Per-method quality scores against a common reference.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub entries: Vec<MetricsEntry>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Metric {
    Mse,
    Psnr,
    Ssim,
}

impl MetricsReport {
    /// Index of the best entry for `metric` (lowest MSE, highest PSNR/SSIM);
    /// the first one wins ties.
    pub fn best(&self, metric: Metric) -> Option<usize> {
        let key = |e: &MetricsEntry| match metric {
            Metric::Mse => -e.mse,
            Metric::Psnr => e.psnr,
            Metric::Ssim => e.ssim,
        };
        let mut best: Option<usize> = None;
        for (i, e) in self.entries.iter().enumerate() {
            if best.is_none_or(|b| key(e) > key(&self.entries[b])) {
                best = Some(i);
            }
        }
        best
    }

    pub fn is_best(&self, index: usize, metric: Metric) -> bool {
        self.best(metric) == Some(index)
    }

    pub fn entry(&self, method: &str) -> Option<&MetricsEntry> {
        self.entries.iter().find(|e| e.method == method)
    }

    /// `method,mse,psnr_db,ssim`, six significant digits, `inf` for
    /// identical images.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mse,psnr_db,ssim\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                e.method,
                format_sig6(e.mse),
                format_sig6(e.psnr),
                format_sig6(e.ssim)
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "method,mse,psnr_db,ssim" => {}
            other => {
                return Err(Error::Format(format!(
                    "expected header method,mse,psnr_db,ssim, got {other:?}"
                )))
            }
        }
        let mut entries = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(Error::Format(format!("bad report row {line:?}")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number {s:?} in {line:?}")))
            };
            entries.push(MetricsEntry {
                method: f[0].to_string(),
                mse: num(f[1])?,
                psnr: num(f[2])?,
                ssim: num(f[3])?,
            });
        }
        Ok(MetricsReport { entries })
    }

    /// Human-readable table with the best value per metric starred.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12} {:>12} {:>12} {:>10}\n", "method", "MSE", "PSNR(dB)", "SSIM");
        let (bm, bp, bs) = (
            self.best(Metric::Mse),
            self.best(Metric::Psnr),
            self.best(Metric::Ssim),
        );
        let star = |b: Option<usize>, i: usize| if b == Some(i) { "*" } else { " " };
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<12} {:>11}{} {:>11}{} {:>9}{}",
                e.method,
                format_sig6(e.mse),
                star(bm, i),
                format_sig6(e.psnr),
                star(bp, i),
                format_sig6(e.ssim),
                star(bs, i)
            );
        }
        out
    }
}

/// Scores every candidate against `original`.
pub fn build_report(original: &Image, candidates: &[(&str, &Image)]) -> Result<MetricsReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to report".into()));
    }
    let entries = candidates
        .iter()
        .map(|(label, img)| {
            let m = mse(original, img)?;
            Ok(MetricsEntry {
                method: label.to_string(),
                mse: m,
                psnr: psnr_from_mse(m),
                ssim: ssim(original, img)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport { entries })
}

/// `%g`-style formatting with six significant digits.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, c, |_, _, _| rng.random::<f32>()).unwrap()
    }

    #[test]
    fn mse_basics() {
        let a = random_image(8, 8, 1, 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let zeros = Image::filled(4, 4, 1, 0.0).unwrap();
        let ones = Image::filled(4, 4, 1, 1.0).unwrap();
        assert_eq!(mse(&zeros, &ones).unwrap(), 1.0);
        assert!(mse(&zeros, &Image::filled(4, 5, 1, 0.0).unwrap()).is_err());
    }

    #[test]
    fn mse_matches_nested_loops() {
        let (a, b) = (random_image(9, 7, 3, 2), random_image(9, 7, 3, 3));
        let mut acc = 0.0;
        for y in 0..9 {
            for x in 0..7 {
                for c in 0..3 {
                    let d = a.get(y, x, c) as f64 - b.get(y, x, c) as f64;
                    acc += d * d;
                }
            }
        }
        assert!((mse(&a, &b).unwrap() - acc / (9.0 * 7.0 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn psnr_against_published_pairs() {
        assert!((psnr_from_mse(0.0051) - 22.92).abs() < 0.01);
        assert!((psnr_from_mse(0.0051) - 22.911).abs() < 0.05);
        assert!((psnr_from_mse(0.0033) - 24.81).abs() < 0.01);
        assert!((psnr_from_mse(0.0033) - 24.820).abs() < 0.05);
        let a = random_image(4, 4, 1, 1);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_identity_and_constants() {
        let a = random_image(16, 16, 1, 4);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let zeros = Image::filled(16, 16, 1, 0.0).unwrap();
        let ones = Image::filled(16, 16, 1, 1.0).unwrap();
        let s = ssim(&zeros, &ones).unwrap();
        // (C1)(C2) / ((1 + C1)(C2)) = C1 / (1 + C1).
        let expected = 1e-4 / (1.0 + 1e-4);
        assert!(s > 0.0 && s < 1e-4);
        assert!((s - expected).abs() < 1e-12);
        assert!(ssim(&Image::filled(10, 30, 1, 0.0).unwrap(), &Image::filled(10, 30, 1, 0.0).unwrap()).is_err());
    }

    #[test]
    fn ssim_rgb_averages_channels() {
        let (a, b) = (random_image(12, 12, 3, 5), random_image(12, 12, 3, 6));
        let per: f64 = (0..3).map(|c| ssim(&a.channel(c), &b.channel(c)).unwrap()).sum::<f64>() / 3.0;
        assert!((ssim(&a, &b).unwrap() - per).abs() < 1e-12);
    }

    #[test]
    fn ssim_direct_window_oracle() {
        // One valid window on an 11x11 image: compare against explicit sums.
        let (a, b) = (random_image(11, 11, 1, 7), random_image(11, 11, 1, 8));
        let taps = ssim_window();
        let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for y in 0..11 {
            for x in 0..11 {
                let w = taps[y] * taps[x];
                let (p, q) = (a.get(y, x, 0) as f64, b.get(y, x, 0) as f64);
                ma += w * p;
                mb += w * q;
                saa += w * p * p;
                sbb += w * q * q;
                sab += w * p * q;
            }
        }
        let (c1, c2) = (1e-4, 9e-4);
        let expected = ((2.0 * ma * mb + c1) * (2.0 * (sab - ma * mb) + c2))
            / ((ma * ma + mb * mb + c1) * (saa - ma * ma + sbb - mb * mb + c2));
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn report_flags_dominant_candidate() {
        let truth = random_image(16, 16, 1, 9);
        let noisy = |amp: f32, seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Image::from_fn(16, 16, 1, |y, x, _| {
                truth.get(y, x, 0) + amp * (rng.random::<f32>() - 0.5)
            })
            .unwrap()
        };
        let (good, mid, bad) = (noisy(0.02, 1), noisy(0.2, 2), noisy(0.6, 3));
        let report = build_report(&truth, &[("mid", &mid), ("good", &good), ("bad", &bad)]).unwrap();
        for m in [Metric::Mse, Metric::Psnr, Metric::Ssim] {
            assert_eq!(report.best(m), Some(1));
        }
        assert!(build_report(&truth, &[]).is_err());
    }

    #[test]
    fn report_single_identical_candidate() {
        let truth = random_image(12, 12, 1, 10);
        let report = build_report(&truth, &[("same", &truth)]).unwrap();
        let e = &report.entries[0];
        assert_eq!((e.mse, e.psnr, e.ssim), (0.0, f64::INFINITY, 1.0));
        assert!(report.is_best(0, Metric::Psnr));
        assert!(report.to_csv().contains("same,0,inf,1"));
    }

    #[test]
    fn report_csv_round_trip() {
        let (a, b, c) = (random_image(12, 12, 1, 11), random_image(12, 12, 1, 12), random_image(12, 12, 1, 13));
        let report = build_report(&a, &[("x", &b), ("y", &c), ("same", &a)]).unwrap();
        let csv = report.to_csv();
        let parsed = MetricsReport::from_csv(&csv).unwrap();
        assert_eq!(parsed.to_csv(), csv);
        assert_eq!(parsed.entries.len(), 3);
        assert_eq!(parsed.entries[2].psnr, f64::INFINITY);
        assert!(MetricsReport::from_csv("a,b\n").is_err());
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0051), "0.0051");
        assert_eq!(format_sig6(22.92445), "22.9245");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(1234567.0), "1.23457e6");
        assert_eq!(format_sig6(1.5e-7), "1.5e-7");
        assert_eq!(format_sig6(f64::INFINITY), "inf");
    }

    proptest! {
        #[test]
        fn psnr_decreases_with_mse(a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(psnr_from_mse(lo) > psnr_from_mse(hi));
        }

        #[test]
        fn ssim_is_symmetric_and_bounded(s1 in any::<u64>(), s2 in any::<u64>()) {
            let (a, b) = (random_image(14, 13, 1, s1), random_image(14, 13, 1, s2));
            let (ab, ba) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab <= 1.0);
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }

        #[test]
        fn sig6_reparses_stably(v in -1e9f64..1e9) {
            let s = format_sig6(v);
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(format_sig6(back), s);
            if v != 0.0 {
                prop_assert!(((back - v) / v).abs() < 1e-5);
            }
        }
    }
}
