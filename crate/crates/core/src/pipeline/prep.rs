use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, save_image, tile, Image, SaveFormat};
use crate::psf::blur;
use crate::train::TrainingPair;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_DIR: &str = "gt";

#[derive(Clone, Debug, PartialEq)]
pub struct PrepConfig {
    pub crop: usize,
    pub tile: usize,
    pub sigmas: Vec<f64>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            crop: 2304,
            tile: 256,
            sigmas: vec![1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub ground_truth: String,
    pub blurred: String,
    pub sigma: f64,
}

/// Everything `prep` wrote. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepManifest {
    pub sources: Vec<String>,
    pub crop: usize,
    pub tile: usize,
    pub sigmas: Vec<f64>,
    pub tiles_per_image: usize,
    pub ground_truth_dir: String,
    pub blurred_dirs: Vec<String>,
    pub ground_truth: Vec<String>,
    pub pairs: Vec<PairRecord>,
}

impl PrepManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Directory name for tiles blurred with `sigma`, e.g. `blur_s1.5`.
pub fn blurred_dir_name(sigma: f64) -> String {
    format!("blur_s{sigma}")
}

/// Image files in `dir` (`.png`, `.raw`, `.rawf32`), sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "raw" | "rawf32"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Rec. 601 luma for colour input; single-channel images pass through.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let d = img.data();
    Image::from_fn(img.height(), img.width(), 1, |y, x, _| {
        let i = (y * img.width() + x) * 3;
        0.299 * d[i] + 0.587 * d[i + 1] + 0.114 * d[i + 2]
    })
    .expect("luma stays in range")
}

fn check_config(cfg: &PrepConfig) -> Result<()> {
    if cfg.crop == 0 || cfg.tile == 0 {
        return Err(Error::InvalidArgument("crop and tile must be positive".into()));
    }
    if cfg.sigmas.is_empty() {
        return Err(Error::InvalidArgument("at least one sigma is required".into()));
    }
    if let Some(s) = cfg.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {s}")));
    }
    Ok(())
}

/// Center-crops every image in `input_dir` to `crop`x`crop`, cuts it into
/// `tile`x`tile` ground-truth patches, writes one blurred copy per σ and a
/// manifest (`manifest.json`). Tiles are 16-bit PNG, grayscale.
pub fn prep(input_dir: &Path, out_dir: &Path, cfg: &PrepConfig) -> Result<PrepManifest> {
    check_config(cfg)?;
    let sources = list_images(input_dir)?;
    if sources.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no images found in {}",
            input_dir.display()
        )));
    }
    let blurred_dirs: Vec<String> = cfg.sigmas.iter().map(|&s| blurred_dir_name(s)).collect();
    for dir in std::iter::once(GROUND_TRUTH_DIR).chain(blurred_dirs.iter().map(String::as_str)) {
        let p = out_dir.join(dir);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }

    let per_image = sources
        .par_iter()
        .map(|src| prep_one(src, out_dir, cfg, &blurred_dirs))
        .collect::<Result<Vec<_>>>()?;

    let tiles_per_image = cfg.crop.div_ceil(cfg.tile).pow(2);
    let mut manifest = PrepManifest {
        sources: sources.iter().map(|p| p.display().to_string()).collect(),
        crop: cfg.crop,
        tile: cfg.tile,
        sigmas: cfg.sigmas.clone(),
        tiles_per_image,
        ground_truth_dir: GROUND_TRUTH_DIR.into(),
        blurred_dirs,
        ground_truth: Vec::new(),
        pairs: Vec::new(),
    };
    for (gt, pairs) in per_image {
        manifest.ground_truth.extend(gt);
        manifest.pairs.extend(pairs);
    }
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    log::info!(
        "prep: {} images -> {} tiles, {} pairs",
        manifest.sources.len(),
        manifest.ground_truth.len(),
        manifest.pairs.len()
    );
    Ok(manifest)
}

fn prep_one(
    src: &Path,
    out_dir: &Path,
    cfg: &PrepConfig,
    blurred_dirs: &[String],
) -> Result<(Vec<String>, Vec<PairRecord>)> {
    let img = to_grayscale(&load_image(src)?);
    let cropped = img.center_crop(cfg.crop).map_err(|e| match e {
        Error::DimensionMismatch(msg) => Error::DimensionMismatch(format!("{}: {msg}", src.display())),
        other => other,
    })?;
    let grid = tile(&cropped, cfg.tile)?;
    let stem = src
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string();
    let mut gt_names = Vec::with_capacity(grid.tiles.len());
    let mut pairs = Vec::with_capacity(grid.tiles.len() * cfg.sigmas.len());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let t = grid.tile_at(r, c);
            let name = format!("{stem}_r{r:02}_c{c:02}.png");
            let gt_rel = format!("{GROUND_TRUTH_DIR}/{name}");
            save_image(t, out_dir.join(&gt_rel), SaveFormat::Png16)?;
            for (&sigma, dir) in cfg.sigmas.iter().zip(blurred_dirs) {
                let rel = format!("{dir}/{name}");
                save_image(&blur(t, sigma)?, out_dir.join(&rel), SaveFormat::Png16)?;
                pairs.push(PairRecord {
                    ground_truth: gt_rel.clone(),
                    blurred: rel,
                    sigma,
                });
            }
            gt_names.push(gt_rel);
        }
    }
    Ok((gt_names, pairs))
}

/// Loads the (blurred, ground truth) tiles recorded for `sigma`.
pub fn load_pairs(manifest_path: &Path, sigma: f64) -> Result<Vec<TrainingPair>> {
    let manifest = PrepManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let selected: Vec<&PairRecord> = manifest
        .pairs
        .iter()
        .filter(|p| (p.sigma - sigma).abs() < 1e-9)
        .collect();
    if selected.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "manifest has no pairs for sigma {sigma} (available: {:?})",
            manifest.sigmas
        )));
    }
    selected
        .par_iter()
        .map(|p| {
            Ok(TrainingPair {
                blurred: to_grayscale(&load_image(base.join(&p.blurred))?),
                target: to_grayscale(&load_image(base.join(&p.ground_truth))?),
            })
        })
        .collect()
}
