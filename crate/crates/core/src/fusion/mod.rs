//! Probabilistic signed-distance fusion and surface extraction.

mod frame;
mod marching_cubes;
mod pipeline;
mod surface;
mod tables;
mod volume;

pub use frame::DepthFrame;
pub use marching_cubes::{extract_mesh, SurfaceMesh};
pub use pipeline::{fuse_frames, Fused, FusionConfig};
pub use surface::{
    extract_surface, surface_variation, ExtractOptions, SurfaceCloud, SurfaceVariation,
    DEFAULT_NEIGHBORHOOD_K, DEFAULT_TARGET_POINTS,
};
pub use volume::{
    gaussian_update, FrozenVolume, FusedVolume, Gaussian, IntegrationStats, DEFAULT_VOXEL_SIZE,
};

