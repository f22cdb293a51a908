use std::fmt;

use crate::edge::{estimate_fwhm_from_edge, EdgeFit, EdgeProfile};
use crate::error::{Error, Result};
use crate::image::Image;

/// Edge-based resolution before and after restoration.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionReport {
    pub before: EdgeFit,
    pub after: EdgeFit,
    /// Distance unit of the profiles' positions (e.g. "µm" or "px").
    pub unit: String,
}

impl ResolutionReport {
    /// FWHM_before / FWHM_after; above 1 means the image got sharper.
    pub fn ratio(&self) -> f64 {
        self.before.fwhm / self.after.fwhm
    }

    pub fn to_csv(&self) -> String {
        format!(
            "fwhm_before,fwhm_after,ratio\n{},{},{}\n",
            self.before.fwhm,
            self.after.fwhm,
            self.ratio()
        )
    }
}

impl fmt::Display for ResolutionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "FWHM before: {:.2} {}", self.before.fwhm, self.unit)?;
        writeln!(f, "FWHM after:  {:.2} {}", self.after.fwhm, self.unit)?;
        write!(f, "improves the resolution by {:.2}×", self.ratio())
    }
}

/// Fits both edge profiles; a failure names the side it came from.
pub fn resolution_from_profiles(before: &EdgeProfile, after: &EdgeProfile, unit: &str) -> Result<ResolutionReport> {
    let fit = |side: &'static str, p: &EdgeProfile| {
        estimate_fwhm_from_edge(p).map_err(|source| Error::SideFit { side, source })
    };
    Ok(ResolutionReport {
        before: fit("before", before)?,
        after: fit("after", after)?,
        unit: unit.to_string(),
    })
}

/// Measures the edge crossed by image row `row` in both images, positions
/// scaled by `pixel_pitch` (µm per pixel).
pub fn resolution_report(
    before: &Image,
    after: &Image,
    row: usize,
    pixel_pitch: f64,
) -> Result<ResolutionReport> {
    let b = EdgeProfile::from_image_row(before, row, 0, pixel_pitch)?;
    let a = EdgeProfile::from_image_row(after, row, 0, pixel_pitch)?;
    resolution_from_profiles(&b, &a, "µm")
}
