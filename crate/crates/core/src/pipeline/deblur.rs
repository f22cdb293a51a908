use std::time::Instant;

use crate::error::Result;
use crate::image::{stitch, tile_with_overlap, Image, VolumeStack};
use crate::rdn::{forward, RdnModel};

pub const INFERENCE_TILE: usize = 256;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct DeblurOptions {
    pub tile: usize,
    /// Pixels shared by neighbouring tiles; blended on stitching.
    pub overlap: usize,
}

impl Default for DeblurOptions {
    fn default() -> Self {
        DeblurOptions {
            tile: INFERENCE_TILE,
            overlap: 0,
        }
    }
}

fn deblur_plane(model: &RdnModel, plane: &Image, opts: &DeblurOptions) -> Result<Image> {
    // An image that fits in one tile is run whole, without padding.
    if plane.height() <= opts.tile && plane.width() <= opts.tile {
        return forward(model, plane);
    }
    let grid = tile_with_overlap(plane, opts.tile, opts.overlap)?;
    let out = grid.map(|t| forward(model, t))?;
    stitch(&out, plane.height(), plane.width())
}

/// Tile, run the network on every tile in parallel, stitch. Colour images
/// are processed channel by channel.
pub fn deblur_image(model: &RdnModel, img: &Image, opts: &DeblurOptions) -> Result<Image> {
    let start = Instant::now();
    let out = img.map_channels(|c| deblur_plane(model, c, opts))?;
    log::info!(
        "deblurred {}x{}x{} in {:.3} s",
        img.height(),
        img.width(),
        img.channels(),
        start.elapsed().as_secs_f64()
    );
    Ok(out)
}

/// [`deblur_image`] on every slice, keeping slice order.
pub fn deblur_volume(model: &RdnModel, vol: &VolumeStack, opts: &DeblurOptions) -> Result<VolumeStack> {
    let slices = vol
        .slices()
        .iter()
        .map(|s| deblur_image(model, s, opts))
        .collect::<Result<Vec<_>>>()?;
    VolumeStack::new(slices)
}
