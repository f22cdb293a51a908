//! Image representation, file I/O and tiling.
//!
//! Intensities are normalized to `[0, 1]` and stored interleaved, row-major:
//! sample `(y, x, c)` lives at `(y * width + x) * channels + c`.

mod io;
mod tile;

pub use io::{load_image, save_image, SaveFormat};
pub use tile::{split_volume, stitch, stitch_volume, tile, tile_with_overlap, TileGrid};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Builds an image from interleaved samples, rejecting anything outside
    /// `[0, 1]` or non-finite.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{channels} image needs {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {pos} is {}", data[pos])));
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "sample {pos} = {} is outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Samples `f(y, x, c)` everywhere. Results are clamped to `[0, 1]`;
    /// NaN maps to 0.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(clamp_unit(f(y, x, c) as f64));
                }
            }
        }
        Image::new(height, width, channels, data)
    }

    /// Single-channel image from a plane of `f64` values, clamped to `[0, 1]`.
    pub fn from_plane(height: usize, width: usize, plane: &[f64]) -> Result<Self> {
        if plane.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "plane of {} values for a {height}x{width} image",
                plane.len()
            )));
        }
        let data = plane.iter().map(|&v| clamp_unit(v)).collect();
        Image::new(height, width, 1, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn require_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    pub(crate) fn require_single_channel(&self) -> Result<()> {
        if self.channels == 1 {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "expected a single-channel image, got {} channels",
                self.channels
            )))
        }
    }

    /// Extracts channel `c` as a single-channel image.
    pub fn channel(&self, c: usize) -> Image {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Interleaves single-channel planes back into one image.
    pub fn from_channels(planes: &[Image]) -> Result<Image> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidArgument("no channels to combine".into()))?;
        for p in planes {
            p.require_single_channel()?;
            if p.height != first.height || p.width != first.width {
                return Err(Error::DimensionMismatch(
                    "channel planes differ in size".into(),
                ));
            }
        }
        let channels = planes.len();
        let mut data = vec![0.0; first.height * first.width * channels];
        for (c, p) in planes.iter().enumerate() {
            for (i, &v) in p.data.iter().enumerate() {
                data[i * channels + c] = v;
            }
        }
        Image::new(first.height, first.width, channels, data)
    }

    /// Applies a single-channel operation to every channel independently.
    pub fn map_channels(&self, mut f: impl FnMut(&Image) -> Result<Image>) -> Result<Image> {
        if self.channels == 1 {
            return f(self);
        }
        let planes = (0..self.channels)
            .map(|c| f(&self.channel(c)))
            .collect::<Result<Vec<_>>>()?;
        Image::from_channels(&planes)
    }

    /// Channel `c` widened to `f64`.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&v| v as f64)
            .collect()
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Image> {
        if height == 0 || width == 0 || y0 + height > self.height || x0 + width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "crop {height}x{width} at ({y0}, {x0}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[start..start + width * self.channels]);
        }
        Ok(Image {
            height,
            width,
            channels: self.channels,
            data,
        })
    }

    /// Centered `size`x`size` crop.
    pub fn center_crop(&self, size: usize) -> Result<Image> {
        if size > self.height || size > self.width {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image is smaller than crop size {size}",
                self.height, self.width
            )));
        }
        self.crop((self.height - size) / 2, (self.width - size) / 2, size, size)
    }

    /// Extends the image by repeating its last row/column.
    pub fn pad_replicate(&self, bottom: usize, right: usize) -> Image {
        if bottom == 0 && right == 0 {
            return self.clone();
        }
        let (h, w, ch) = (self.height + bottom, self.width + right, self.channels);
        let mut data = Vec::with_capacity(h * w * ch);
        for y in 0..h {
            let sy = y.min(self.height - 1);
            for x in 0..w {
                let sx = x.min(self.width - 1);
                let start = (sy * self.width + sx) * ch;
                data.extend_from_slice(&self.data[start..start + ch]);
            }
        }
        Image {
            height: h,
            width: w,
            channels: ch,
            data,
        }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0) as f32
    }
}

/// Ordered stack of single-channel slices sharing one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeStack {
    slices: Vec<Image>,
}

impl VolumeStack {
    pub fn new(slices: Vec<Image>) -> Result<Self> {
        if let Some(first) = slices.first() {
            for (i, s) in slices.iter().enumerate() {
                s.require_single_channel()?;
                if s.dims() != first.dims() {
                    return Err(Error::DimensionMismatch(format!(
                        "slice {i} is {:?}, slice 0 is {:?}",
                        s.dims(),
                        first.dims()
                    )));
                }
            }
        }
        Ok(VolumeStack { slices })
    }

    pub fn depth(&self) -> usize {
        self.slices.len()
    }

    pub fn slices(&self) -> &[Image] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<Image> {
        self.slices
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_bad_shapes() {
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.0; 2]).is_err());
        assert!(Image::new(0, 1, 1, vec![]).is_err());
    }

    #[test]
    fn channel_split_and_merge() {
        let img = Image::from_fn(3, 4, 3, |y, x, c| (y * 12 + x * 3 + c) as f32 / 36.0).unwrap();
        let planes: Vec<_> = (0..3).map(|c| img.channel(c)).collect();
        assert_eq!(planes[2].get(1, 2, 0), img.get(1, 2, 2));
        assert_eq!(Image::from_channels(&planes).unwrap(), img);
    }

    #[test]
    fn replicate_padding_copies_edges() {
        let img = Image::from_fn(2, 2, 1, |y, x, _| (y * 2 + x) as f32 / 4.0).unwrap();
        let p = img.pad_replicate(2, 1);
        assert_eq!(p.dims(), (4, 3, 1));
        assert_eq!(p.get(3, 2, 0), img.get(1, 1, 0));
        assert_eq!(p.get(0, 2, 0), img.get(0, 1, 0));
        assert_eq!(p.get(3, 0, 0), img.get(1, 0, 0));
    }

    #[test]
    fn center_crop_takes_the_middle() {
        let img = Image::from_fn(6, 6, 1, |y, x, _| (y * 6 + x) as f32 / 36.0).unwrap();
        let c = img.center_crop(2).unwrap();
        assert_eq!(c.get(0, 0, 0), img.get(2, 2, 0));
        assert!(img.center_crop(7).is_err());
    }

    #[test]
    fn volume_requires_matching_slices() {
        let a = Image::filled(4, 4, 1, 0.0).unwrap();
        let b = Image::filled(4, 5, 1, 0.0).unwrap();
        assert!(VolumeStack::new(vec![a.clone(), b]).is_err());
        assert_eq!(VolumeStack::new(vec![a.clone(), a]).unwrap().depth(), 2);
    }
}
