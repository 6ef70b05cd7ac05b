//! Seeded synthetic detection scenes: filled shapes on multi-octave value-noise
//! backgrounds, plus split manifests that regenerate bit-identical data.

mod manifest;
mod scene;
mod texture;

pub use manifest::{generate_dataset, short_hash, spec_hash, DatasetManifest, ManifestRecord, Split, SplitCounts, SplitInfo};
pub use scene::{render_scene, BoxLabel, SceneSpec, ShapeClass};
pub use texture::Background;
