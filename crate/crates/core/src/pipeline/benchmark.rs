use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::deblur::{deblur_image, DeblurOptions};
use crate::deconv::{blind_deconv, richardson_lucy, DeconvConfig};
use crate::error::{Error, Result};
use crate::image::{save_image, Image, SaveFormat};
use crate::metrics::{build_report, MetricsReport};
use crate::psf::{blur, default_radius, make_gaussian_kernel};
use crate::rdn::RdnModel;

/// Method labels, in report order.
pub const METHODS: [&str; 4] = ["blurred", "deconv", "rl", "rdn"];

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub sigma: f64,
    /// σ of the Gaussian that seeds blind deconvolution.
    pub blind_init_sigma: f64,
    pub blurred: Image,
    pub deconv: Image,
    pub rl: Image,
    pub rdn: Image,
    pub report: MetricsReport,
}

impl Benchmark {
    pub fn images(&self) -> [(&'static str, &Image); 4] {
        [
            (METHODS[0], &self.blurred),
            (METHODS[1], &self.deconv),
            (METHODS[2], &self.rl),
            (METHODS[3], &self.rdn),
        ]
    }
}

/// Blurs `original` with σ, restores it with blind deconvolution, RL with the
/// true PSF and the network, and scores all four against the original.
/// Blind deconvolution starts from a Gaussian of width `blind_init_sigma`.
pub fn benchmark(
    original: &Image,
    sigma: f64,
    model: &RdnModel,
    blind_init_sigma: f64,
    cfg: &DeconvConfig,
) -> Result<Benchmark> {
    let blurred = blur(original, sigma)?;
    let psf = make_gaussian_kernel(sigma, default_radius(sigma))?;
    let init = make_gaussian_kernel(blind_init_sigma, default_radius(blind_init_sigma))?;
    let rl = blurred.map_channels(|c| richardson_lucy(c, &psf, cfg))?;
    let deconv = blurred.map_channels(|c| Ok(blind_deconv(c, &init, cfg)?.0))?;
    let rdn = deblur_image(model, &blurred, &DeblurOptions::default())?;
    let report = build_report(
        original,
        &[
            (METHODS[0], &blurred),
            (METHODS[1], &deconv),
            (METHODS[2], &rl),
            (METHODS[3], &rdn),
        ],
    )?;
    Ok(Benchmark {
        sigma,
        blind_init_sigma,
        blurred,
        deconv,
        rl,
        rdn,
        report,
    })
}

/// Intensity along image row `row` (channel 0) for each labelled image:
/// header `x,label1,label2,...`.
pub fn line_profile_csv(row: usize, images: &[(&str, &Image)]) -> Result<String> {
    let Some((_, first)) = images.first() else {
        return Err(Error::InvalidArgument("no images to profile".into()));
    };
    if row >= first.height() {
        return Err(Error::InvalidArgument(format!(
            "row {row} outside image of height {}",
            first.height()
        )));
    }
    for (label, img) in images {
        if img.dims() != first.dims() {
            return Err(Error::DimensionMismatch(format!("{label} differs in size")));
        }
    }
    let mut out = String::from("x");
    for (label, _) in images {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for x in 0..first.width() {
        let _ = write!(out, "{x}");
        for (_, img) in images {
            let _ = write!(out, ",{}", img.get(row, x, 0));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `report.csv`, `profile.csv`, the original and every restored image
/// (16-bit PNG) into `dir`.
pub fn write_benchmark(dir: &Path, original: &Image, bench: &Benchmark, profile_row: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("report.csv", bench.report.to_csv())?;
    let mut labelled = vec![("original", original)];
    labelled.extend(bench.images());
    write("profile.csv", line_profile_csv(profile_row, &labelled)?)?;
    for (label, img) in labelled {
        save_image(img, dir.join(format!("{label}.png")), SaveFormat::Png16)?;
    }
    Ok(())
}
