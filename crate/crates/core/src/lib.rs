//! Deblurring toolkit for optical microscopy images.
//!
//! The crate covers the whole pipeline: Gaussian PSF blur simulation,
//! Richardson-Lucy and blind deconvolution baselines, a residual dense
//! network (RDN) with hand-written reverse-mode gradients and an Adam
//! trainer, image quality metrics, and the tile/infer/stitch path used to
//! deblur full-size images and 3D slice stacks.

pub mod deconv;
pub mod edge;
pub mod error;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod psf;
pub mod rdn;
pub mod synth;
pub mod train;

pub use crate::error::{Error, FitError, Result};
pub use crate::image::{Image, TileGrid, VolumeStack};
