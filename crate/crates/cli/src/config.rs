//! Run configuration: one TOML file holding input paths and every stage's
//! settings. Angles are in degrees here and converted on use.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use taskgrasp::fusion::FusionConfig;
use taskgrasp::grasp::{GripperModel, PlanConfig, ScoreConfig, TablePlane};
use taskgrasp::sensor::DEFAULT_MAX_INCIDENCE;
use taskgrasp::skeleton::DEFAULT_MIN_VIEWS;
use taskgrasp::task::TrainConfig;
use taskgrasp::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// output directory
    pub out: PathBuf,
    /// plan and score without a task model
    pub baseline: bool,
    pub paths: Paths,
    pub fusion: FusionSection,
    pub triangulate: TriangulateSection,
    pub train: TrainSection,
    pub score: ScoreSection,
    pub gripper: GripperModel,
    pub plan: PlanSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            baseline: false,
            paths: Paths::default(),
            fusion: FusionSection::default(),
            triangulate: TriangulateSection::default(),
            train: TrainSection::default(),
            score: ScoreSection::default(),
            gripper: GripperModel::default(),
            plan: PlanSection::default(),
        }
    }
}

/// Inputs. Relative paths in a config file are taken relative to that file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// directory of frame sidecars
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    /// keypoint detections, JSON lines
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observations: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skeleton_spec: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotation: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cloud: Option<PathBuf>,
    /// skeleton instance
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_model: Option<PathBuf>,
    /// scene description for `render`, JSON
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene: Option<PathBuf>,
}

impl Paths {
    fn rebase(&mut self, dir: &Path) {
        for p in [
            &mut self.frames,
            &mut self.observations,
            &mut self.skeleton_spec,
            &mut self.annotation,
            &mut self.cloud,
            &mut self.skeleton,
            &mut self.task_model,
            &mut self.scene,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    fn each(&self) -> [(&'static str, &Option<PathBuf>); 8] {
        [
            ("frames", &self.frames),
            ("observations", &self.observations),
            ("skeleton_spec", &self.skeleton_spec),
            ("annotation", &self.annotation),
            ("cloud", &self.cloud),
            ("skeleton", &self.skeleton),
            ("task_model", &self.task_model),
            ("scene", &self.scene),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub voxel_size: f64,
    pub truncation_voxels: f64,
    pub max_incidence_deg: f64,
    pub target_points: usize,
    pub neighborhood_k: usize,
}

impl Default for FusionSection {
    fn default() -> Self {
        let f = FusionConfig::default();
        Self {
            voxel_size: f.voxel_size,
            truncation_voxels: f.truncation_voxels,
            max_incidence_deg: DEFAULT_MAX_INCIDENCE.to_degrees(),
            target_points: f.target_points,
            neighborhood_k: f.neighborhood_k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriangulateSection {
    pub min_views: usize,
}

impl Default for TriangulateSection {
    fn default() -> Self {
        Self {
            min_views: DEFAULT_MIN_VIEWS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub max_components: usize,
    /// in link lengths
    pub distance_cap: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            max_components: t.max_components,
            distance_cap: t.distance_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSection {
    pub weights: [f64; 3],
    pub friction_cone_deg: f64,
    pub c_max: f64,
}

impl Default for ScoreSection {
    fn default() -> Self {
        let s = ScoreConfig::default();
        Self {
            weights: s.weights,
            friction_cone_deg: s.friction_cone.to_degrees(),
            c_max: s.c_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub samples: usize,
    pub rolls_deg: Vec<f64>,
    pub refine_iterations: usize,
    pub rotation_offset_deg: f64,
    pub position_offset: f64,
    pub collision_margin: f64,
    pub table: TablePlane,
}

impl Default for PlanSection {
    fn default() -> Self {
        let p = PlanConfig::default();
        Self {
            samples: p.samples,
            rolls_deg: p.rolls.iter().map(|r| r.to_degrees()).collect(),
            refine_iterations: p.refine_iterations,
            rotation_offset_deg: p.rotation_offset.to_degrees(),
            position_offset: p.position_offset,
            collision_margin: p.collision_margin,
            table: p.table,
        }
    }
}

impl RunConfig {
    /// Parses a config file; relative input paths are resolved against its
    /// directory, the output directory against the working directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        cfg.paths.rebase(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse("config", e))
    }

    /// Checks every setting and that the referenced inputs exist.
    pub fn validate(&self) -> Result<()> {
        for (name, p) in self.paths.each() {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::InvalidConfig(format!("{name} path {} does not exist", p.display())));
                }
            }
        }
        self.score_config()?.validate()?;
        self.gripper.validate()?;
        self.plan_config().validate()?;
        let f = self.fusion_config();
        if !(f.voxel_size > 0.0 && f.voxel_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("voxel size {} must be positive", f.voxel_size)));
        }
        if self.triangulate.min_views < 2 {
            return Err(Error::InvalidConfig("min_views must be >= 2".into()));
        }
        Ok(())
    }

    pub fn fusion_config(&self) -> FusionConfig {
        let f = &self.fusion;
        FusionConfig {
            voxel_size: f.voxel_size,
            truncation_voxels: f.truncation_voxels,
            max_incidence: f.max_incidence_deg.to_radians(),
            target_points: f.target_points,
            neighborhood_k: f.neighborhood_k,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_components: self.train.max_components,
            seed: self.seed,
            distance_cap: self.train.distance_cap,
        }
    }

    pub fn score_config(&self) -> Result<ScoreConfig> {
        let s = ScoreConfig {
            weights: self.score.weights,
            friction_cone: self.score.friction_cone_deg.to_radians(),
            c_max: self.score.c_max,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn plan_config(&self) -> PlanConfig {
        let p = &self.plan;
        PlanConfig {
            samples: p.samples,
            rolls: p.rolls_deg.iter().map(|r| r.to_radians()).collect(),
            refine_iterations: p.refine_iterations,
            rotation_offset: p.rotation_offset_deg.to_radians(),
            position_offset: p.position_offset,
            seed: self.seed,
            table: p.table,
            collision_margin: p.collision_margin,
        }
    }
}
