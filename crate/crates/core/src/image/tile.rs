use rayon::prelude::*;

use super::{Image, VolumeStack};
use crate::error::{Error, Result};

/// An image cut into square tiles, row-major.
///
/// With `overlap == 0` tiles butt against each other and
/// `height + pad_bottom == rows * tile_size`. With a positive overlap the
/// tile stride is `tile_size - overlap` and stitching feathers the shared
/// borders.
#[derive(Clone, Debug, PartialEq)]
pub struct TileGrid {
    pub tile_size: usize,
    pub overlap: usize,
    pub rows: usize,
    pub cols: usize,
    /// Source image size before padding.
    pub height: usize,
    pub width: usize,
    pub pad_bottom: usize,
    pub pad_right: usize,
    pub tiles: Vec<Image>,
}

impl TileGrid {
    pub fn stride(&self) -> usize {
        self.tile_size - self.overlap
    }

    pub fn padded_height(&self) -> usize {
        self.height + self.pad_bottom
    }

    pub fn padded_width(&self) -> usize {
        self.width + self.pad_right
    }

    pub fn tile_at(&self, row: usize, col: usize) -> &Image {
        &self.tiles[row * self.cols + col]
    }

    /// Runs `f` over every tile in parallel, keeping the grid layout.
    pub fn map<F>(&self, f: F) -> Result<TileGrid>
    where
        F: Fn(&Image) -> Result<Image> + Sync,
    {
        let tiles = self.tiles.par_iter().map(&f).collect::<Result<Vec<_>>>()?;
        Ok(TileGrid {
            tiles,
            ..self.clone_layout()
        })
    }

    fn clone_layout(&self) -> TileGrid {
        TileGrid {
            tiles: Vec::new(),
            ..*self
        }
    }
}

fn tile_count(len: usize, tile_size: usize, stride: usize) -> usize {
    if len <= tile_size {
        1
    } else {
        (len - tile_size).div_ceil(stride) + 1
    }
}

/// Pads (replicate-edge) to a multiple of `tile_size` and cuts row-major.
pub fn tile(img: &Image, tile_size: usize) -> Result<TileGrid> {
    tile_with_overlap(img, tile_size, 0)
}

pub fn tile_with_overlap(img: &Image, tile_size: usize, overlap: usize) -> Result<TileGrid> {
    if tile_size == 0 {
        return Err(Error::InvalidArgument("tile size must be positive".into()));
    }
    if overlap >= tile_size {
        return Err(Error::InvalidArgument(format!(
            "overlap {overlap} must be smaller than tile size {tile_size}"
        )));
    }
    let stride = tile_size - overlap;
    let rows = tile_count(img.height(), tile_size, stride);
    let cols = tile_count(img.width(), tile_size, stride);
    let pad_bottom = (rows - 1) * stride + tile_size - img.height();
    let pad_right = (cols - 1) * stride + tile_size - img.width();
    let padded = img.pad_replicate(pad_bottom, pad_right);

    let mut tiles = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            tiles.push(padded.crop(r * stride, c * stride, tile_size, tile_size)?);
        }
    }
    Ok(TileGrid {
        tile_size,
        overlap,
        rows,
        cols,
        height: img.height(),
        width: img.width(),
        pad_bottom,
        pad_right,
        tiles,
    })
}

/// Reassembles a grid and crops it to `out_height` x `out_width`.
pub fn stitch(grid: &TileGrid, out_height: usize, out_width: usize) -> Result<Image> {
    if grid.tiles.len() != grid.rows * grid.cols || grid.tiles.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "grid declares {}x{} tiles but holds {}",
            grid.rows,
            grid.cols,
            grid.tiles.len()
        )));
    }
    if grid.overlap >= grid.tile_size {
        return Err(Error::InvalidArgument("overlap must be smaller than tile size".into()));
    }
    let channels = grid.tiles[0].channels();
    for t in &grid.tiles {
        if t.dims() != (grid.tile_size, grid.tile_size, channels) {
            return Err(Error::DimensionMismatch(format!(
                "tile of shape {:?} in a grid of {}px tiles",
                t.dims(),
                grid.tile_size
            )));
        }
    }
    let stride = grid.stride();
    let full_h = (grid.rows - 1) * stride + grid.tile_size;
    let full_w = (grid.cols - 1) * stride + grid.tile_size;
    if out_height == 0 || out_width == 0 || out_height > full_h || out_width > full_w {
        return Err(Error::DimensionMismatch(format!(
            "cannot stitch {out_height}x{out_width} from a {full_h}x{full_w} grid"
        )));
    }

    let row_len = out_width * channels;
    if grid.overlap == 0 {
        let mut data = vec![0.0f32; out_height * row_len];
        for (i, t) in grid.tiles.iter().enumerate() {
            let (y0, x0) = ((i / grid.cols) * stride, (i % grid.cols) * stride);
            if y0 >= out_height || x0 >= out_width {
                continue;
            }
            let copy_w = (out_width - x0).min(grid.tile_size) * channels;
            for ty in 0..grid.tile_size.min(out_height - y0) {
                let src = &t.data()[ty * grid.tile_size * channels..][..copy_w];
                let dst = (y0 + ty) * row_len + x0 * channels;
                data[dst..dst + copy_w].copy_from_slice(src);
            }
        }
        return Image::new(out_height, out_width, channels, data);
    }

    // Feathered blend: each tile contributes with a tent weight that ramps
    // over the overlap band, normalized by the accumulated weight.
    let ramp: Vec<f64> = (0..grid.tile_size)
        .map(|u| (u + 1).min(grid.tile_size - u).min(grid.overlap + 1) as f64)
        .collect();
    let mut acc = vec![0.0f64; out_height * row_len];
    let mut weight = vec![0.0f64; out_height * out_width];
    for (i, t) in grid.tiles.iter().enumerate() {
        let (y0, x0) = ((i / grid.cols) * stride, (i % grid.cols) * stride);
        for ty in 0..grid.tile_size {
            let y = y0 + ty;
            if y >= out_height {
                break;
            }
            for tx in 0..grid.tile_size {
                let x = x0 + tx;
                if x >= out_width {
                    break;
                }
                let w = ramp[ty] * ramp[tx];
                weight[y * out_width + x] += w;
                for c in 0..channels {
                    acc[(y * out_width + x) * channels + c] += w * t.get(ty, tx, c) as f64;
                }
            }
        }
    }
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, &v)| super::clamp_unit(v / weight[i / channels]))
        .collect();
    Image::new(out_height, out_width, channels, data)
}

/// Tiles every slice of a stack, preserving slice order.
pub fn split_volume(vol: &VolumeStack, tile_size: usize) -> Result<Vec<TileGrid>> {
    if vol.depth() == 0 {
        return Err(Error::InvalidArgument("empty volume stack".into()));
    }
    vol.slices().iter().map(|s| tile(s, tile_size)).collect()
}

pub fn stitch_volume(grids: &[TileGrid], out_height: usize, out_width: usize) -> Result<VolumeStack> {
    let slices = grids
        .iter()
        .map(|g| stitch(g, out_height, out_width))
        .collect::<Result<Vec<_>>>()?;
    VolumeStack::new(slices)
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
    fn paper_crop_gives_81_tiles() {
        let img = Image::filled(2304, 2304, 1, 0.3).unwrap();
        let g = tile(&img, 256).unwrap();
        assert_eq!((g.rows, g.cols, g.tiles.len()), (9, 9, 81));
        assert_eq!((g.pad_bottom, g.pad_right), (0, 0));
        assert_eq!(242 * g.tiles.len(), 19_602);
    }

    #[test]
    fn exact_tile_is_identity() {
        let img = random_image(256, 256, 1, 1);
        let g = tile(&img, 256).unwrap();
        assert_eq!(g.tiles.len(), 1);
        assert_eq!(g.tiles[0], img);
    }

    #[test]
    fn non_multiple_pads_to_two_by_two() {
        let img = random_image(300, 300, 1, 2);
        let g = tile(&img, 256).unwrap();
        assert_eq!((g.rows, g.cols), (2, 2));
        assert_eq!((g.pad_bottom, g.pad_right), (212, 212));
        assert_eq!(g.padded_height(), 2 * 256);
        assert_eq!(stitch(&g, 300, 300).unwrap(), img);
    }

    #[test]
    fn one_pixel_image_pads_to_single_tile() {
        let img = Image::filled(1, 1, 1, 0.7).unwrap();
        let g = tile(&img, 4).unwrap();
        assert_eq!(g.tiles.len(), 1);
        assert!(g.tiles[0].data().iter().all(|&v| v == 0.7));
        assert_eq!(stitch(&g, 1, 1).unwrap(), img);
    }

    #[test]
    fn quadrant_layout() {
        let values = [0.1f32, 0.2, 0.3, 0.4];
        let grid = TileGrid {
            tile_size: 2,
            overlap: 0,
            rows: 2,
            cols: 2,
            height: 4,
            width: 4,
            pad_bottom: 0,
            pad_right: 0,
            tiles: values.iter().map(|&v| Image::filled(2, 2, 1, v).unwrap()).collect(),
        };
        let img = stitch(&grid, 4, 4).unwrap();
        let expected = Image::from_fn(4, 4, 1, |y, x, _| values[(y / 2) * 2 + x / 2]).unwrap();
        assert_eq!(img, expected);
    }

    #[test]
    fn stitch_rejects_oversized_output_and_bad_tiles() {
        let img = random_image(5, 5, 1, 3);
        let mut g = tile(&img, 4).unwrap();
        assert!(stitch(&g, 9, 8).is_err());
        g.tiles.pop();
        assert!(stitch(&g, 5, 5).is_err());
    }

    #[test]
    fn volume_split_counts_and_round_trip() {
        let slices: Vec<_> = (0..5).map(|s| random_image(512, 512, 1, s)).collect();
        let vol = VolumeStack::new(slices).unwrap();
        let grids = split_volume(&vol, 256).unwrap();
        assert_eq!(grids.len(), 5);
        assert!(grids.iter().all(|g| g.tiles.len() == 4));
        assert_eq!(stitch_volume(&grids, 512, 512).unwrap(), vol);

        let small = VolumeStack::new((0..3).map(|s| random_image(256, 256, 1, s)).collect()).unwrap();
        let grids = split_volume(&small, 256).unwrap();
        assert!(grids.iter().all(|g| g.tiles.len() == 1));
        assert!(split_volume(&VolumeStack::new(vec![]).unwrap(), 256).is_err());
    }

    #[test]
    fn overlap_grid_covers_image_and_blends_identity() {
        let img = random_image(37, 23, 3, 4);
        let g = tile_with_overlap(&img, 16, 4).unwrap();
        assert_eq!(g.stride(), 12);
        assert!((g.rows - 1) * 12 + 16 >= 37);
        let back = stitch(&g, 37, 23).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(tile_with_overlap(&img, 8, 8).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_is_exact(h in 1usize..40, w in 1usize..40, t in 1usize..17, rgb in any::<bool>(), seed in any::<u64>()) {
            let img = random_image(h, w, if rgb { 3 } else { 1 }, seed);
            let g = tile(&img, t).unwrap();
            prop_assert_eq!(g.tiles.len(), g.rows * g.cols);
            prop_assert_eq!(g.padded_height(), g.rows * t);
            prop_assert_eq!(g.padded_width(), g.cols * t);
            prop_assert_eq!(g.rows, h.div_ceil(t));
            let (lo, hi) = img.min_max();
            for tile in &g.tiles {
                let (tl, th) = tile.min_max();
                prop_assert!(tl >= lo && th <= hi);
            }
            prop_assert_eq!(stitch(&g, h, w).unwrap(), img);
        }
    }
}
