//! Dataset preparation, model registry, tiled inference, baseline
//! comparison and edge-based resolution reporting.

mod benchmark;
mod deblur;
mod prep;
mod registry;
mod resolution;

pub use benchmark::{benchmark, line_profile_csv, write_benchmark, Benchmark, METHODS};
pub use deblur::{deblur_image, deblur_volume, DeblurOptions, INFERENCE_TILE};
pub use prep::{
    blurred_dir_name, list_images, load_pairs, prep, to_grayscale, PairRecord, PrepConfig,
    PrepManifest, GROUND_TRUTH_DIR, MANIFEST_FILE,
};
pub use registry::{ModelRegistry, RegistryEntry, DEFAULT_SIGMA_GRID};
pub use resolution::{resolution_from_profiles, resolution_report, ResolutionReport};
