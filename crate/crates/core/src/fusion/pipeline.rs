use serde::{Deserialize, Serialize};

use super::{extract_surface, DepthFrame, ExtractOptions, FrozenVolume, FusedVolume, IntegrationStats, SurfaceCloud};
use crate::error::{Error, Result};
use crate::sensor::{SensorModel, DEFAULT_MAX_INCIDENCE};

/// Settings for [`fuse_frames`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// mm
    pub voxel_size: f64,
    /// truncation band in voxels
    pub truncation_voxels: f64,
    /// rad
    pub max_incidence: f64,
    pub target_points: usize,
    pub neighborhood_k: usize,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let e = ExtractOptions::default();
        Self {
            voxel_size: super::DEFAULT_VOXEL_SIZE,
            truncation_voxels: 4.0,
            max_incidence: DEFAULT_MAX_INCIDENCE,
            target_points: e.target_points,
            neighborhood_k: e.neighborhood_k,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fused {
    pub volume: FrozenVolume,
    pub cloud: SurfaceCloud,
    pub stats: Vec<IntegrationStats>,
}

/// Integrates every frame into a grid fitted around them and extracts the
/// surface cloud.
pub fn fuse_frames(frames: &[DepthFrame], cfg: &FusionConfig) -> Result<Fused> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("no depth frames".into()));
    }
    if !(cfg.truncation_voxels > 0.0) {
        return Err(Error::InvalidConfig("truncation must be positive".into()));
    }
    let sensor = SensorModel::new(cfg.max_incidence)?;
    let mut volume = FusedVolume::enclosing(frames, cfg.voxel_size, cfg.truncation_voxels * cfg.voxel_size)?;
    let stats: Vec<IntegrationStats> = frames.iter().map(|f| volume.integrate(f, &sensor)).collect();
    let volume = volume.freeze();
    let cloud = extract_surface(
        &volume,
        &ExtractOptions {
            target_points: cfg.target_points,
            neighborhood_k: cfg.neighborhood_k,
            seed: cfg.seed,
        },
    )?;
    Ok(Fused { volume, cloud, stats })
}
