use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use super::Image;
use crate::error::{Error, Result};

/// Magic bytes of the raw float image format.
pub const RAW_MAGIC: &[u8; 4] = b"DBF1";
const RAW_HEADER_LEN: usize = 16;
const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SaveFormat {
    Png8,
    Png16,
    /// `DBF1` header (height, width, channels as LE u32) then LE f32 samples.
    RawF32,
}

impl SaveFormat {
    /// `.png` maps to 8-bit PNG, anything else to raw float.
    pub fn from_path(path: &Path) -> SaveFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("png") => SaveFormat::Png8,
            _ => SaveFormat::RawF32,
        }
    }
}

impl std::str::FromStr for SaveFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "png8" => Ok(SaveFormat::Png8),
            "png16" => Ok(SaveFormat::Png16),
            "rawf32" => Ok(SaveFormat::RawF32),
            other => Err(Error::InvalidArgument(format!(
                "unknown image format {other:?} (expected png8, png16 or rawf32)"
            ))),
        }
    }
}

/// Loads an 8/16-bit PNG or a raw float image, normalizing to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(RAW_MAGIC) {
        decode_raw(&bytes)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(&bytes)
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{}: neither PNG nor DBF1 raw image",
            path.display()
        )))
    }
}

pub fn save_image(img: &Image, path: impl AsRef<Path>, format: SaveFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        SaveFormat::RawF32 => fs::write(path, encode_raw(img)).map_err(|e| Error::io(path, e)),
        SaveFormat::Png8 => {
            let samples: Vec<u8> = img.data().iter().map(|&v| quantize(v, 255.0) as u8).collect();
            write_png(img, samples, path)
        }
        SaveFormat::Png16 => {
            let samples: Vec<u16> = img
                .data()
                .iter()
                .map(|&v| quantize(v, 65535.0) as u16)
                .collect();
            write_png(img, samples, path)
        }
    }
}

fn quantize(v: f32, full_scale: f32) -> f32 {
    (v.clamp(0.0, 1.0) * full_scale).round()
}

fn write_png<S>(img: &Image, samples: Vec<S>, path: &Path) -> Result<()>
where
    S: image::Primitive,
    Luma<S>: image::PixelWithColorType<Subpixel = S>,
    Rgb<S>: image::PixelWithColorType<Subpixel = S>,
    [S]: image::EncodableLayout,
{
    let (h, w, c) = (img.height() as u32, img.width() as u32, img.channels());
    let result = if c == 1 {
        ImageBuffer::<Luma<S>, Vec<S>>::from_raw(w, h, samples)
            .expect("buffer length matches image")
            .save_with_format(path, ImageFormat::Png)
    } else {
        ImageBuffer::<Rgb<S>, Vec<S>>::from_raw(w, h, samples)
            .expect("buffer length matches image")
            .save_with_format(path, ImageFormat::Png)
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(other.to_string()),
    })
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let dynamic = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let scale8 = |v: u8| v as f32 / 255.0;
    let scale16 = |v: u16| v as f32 / 65535.0;
    let (channels, data): (usize, Vec<f32>) = match dynamic {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(scale8).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(scale8).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(scale16).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(scale16).collect()),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            log::warn!("dropping alpha channel");
            let b = dynamic.to_luma32f();
            (1, b.into_raw())
        }
        DynamicImage::ImageRgba8(_) | DynamicImage::ImageRgba16(_) => {
            log::warn!("dropping alpha channel");
            let b = dynamic.to_rgb32f();
            (3, b.into_raw())
        }
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG color type {:?}",
                other.color()
            )))
        }
    };
    Image::new(h, w, channels, data)
}

fn encode_raw(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + img.data().len() * 4);
    out.extend_from_slice(RAW_MAGIC);
    for dim in [img.height(), img.width(), img.channels()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_raw(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(Error::Format("raw image header truncated".into()));
    }
    let field = |i: usize| {
        let start = 4 + 4 * i;
        u32::from_le_bytes(bytes[start..start + 4].try_into().unwrap()) as usize
    };
    let (h, w, c) = (field(0), field(1), field(2));
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("raw image header overflows".into()))?;
    let payload = &bytes[RAW_HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "raw header declares {h}x{w}x{c} ({expected} bytes) but payload has {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Image::new(h, w, c, data)
}
