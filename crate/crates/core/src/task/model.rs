use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::{select_by_bic, Component, Gmm, DEFAULT_MAX_COMPONENTS};
use crate::error::{Error, Result};
use crate::fusion::SurfaceCloud;
use crate::skeleton::{Skeleton, SkeletonFile, SkeletonSpec};

/// Points farther than this many link lengths from every link score 0.
pub const DEFAULT_DISTANCE_CAP: f64 = 3.0;
/// Fewer grasp points than this near a keypoint's links triggers the
/// single-component fallback.
pub const MIN_KEYPOINT_POINTS: usize = 3;

/// An exemplar object with the surface points an expert marked as good
/// grasp locations for a task.
#[derive(Debug, Clone)]
pub struct ExemplarAnnotation {
    pub class: String,
    pub task: String,
    pub skeleton: Skeleton,
    pub grasp_points: Vec<Point3<f64>>,
}

/// On-disk annotation. Paths are relative to the annotation file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub class: String,
    pub task: String,
    pub cloud: PathBuf,
    pub skeleton: PathBuf,
    pub grasp_indices: Vec<usize>,
}

impl ExemplarAnnotation {
    pub fn load(path: &Path) -> Result<Self> {
        let file: AnnotationFile = crate::io::read_json(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let cloud = crate::io::read_cloud(&dir.join(&file.cloud))?;
        let sk_file: SkeletonFile = crate::io::read_json(&dir.join(&file.skeleton))?;
        let skeleton = Skeleton::from_file(&sk_file)?;
        let mut grasp_points = Vec::with_capacity(file.grasp_indices.len());
        for &i in &file.grasp_indices {
            let p = cloud.positions.get(i).ok_or_else(|| {
                Error::InvalidInput(format!("grasp index {i} outside cloud of {} points", cloud.len()))
            })?;
            grasp_points.push(*p);
        }
        Ok(Self {
            class: file.class,
            task: file.task,
            skeleton,
            grasp_points,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub max_components: usize,
    pub seed: u64,
    pub distance_cap: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_components: DEFAULT_MAX_COMPONENTS,
            seed: 0,
            distance_cap: DEFAULT_DISTANCE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointGmm {
    pub keypoint: usize,
    pub name: String,
    pub components: Vec<Component>,
    /// mixture density at its highest component mean
    pub normalizer: f64,
    /// trained on all grasp points with one component
    #[serde(default)]
    pub low_data: bool,
    pub n_points: usize,
    /// (component count, BIC)
    pub bic: Vec<(usize, f64)>,
}

impl KeypointGmm {
    pub fn gmm(&self) -> Gmm {
        Gmm {
            components: self.components.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub max_components: usize,
    pub grasp_points: usize,
}

/// Per-keypoint direction mixtures for one (class, task).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskModel {
    pub class: String,
    pub task: String,
    pub skeleton: SkeletonSpec,
    /// link lengths of the exemplar, mm
    pub link_lengths: Vec<f64>,
    pub distance_cap: f64,
    pub keypoints: Vec<KeypointGmm>,
    pub metadata: TrainingMetadata,
}

/// Scores with the number of values that were clamped to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSurface {
    pub scores: Vec<f64>,
    pub clamped: usize,
}

impl TaskModel {
    pub fn train(annotation: &ExemplarAnnotation, cfg: &TrainConfig) -> Result<Self> {
        if cfg.max_components == 0 {
            return Err(Error::InvalidConfig("max_components must be >= 1".into()));
        }
        if !(cfg.distance_cap > 0.0) {
            return Err(Error::InvalidConfig(format!("distance cap {} must be positive", cfg.distance_cap)));
        }
        if annotation.grasp_points.is_empty() {
            return Err(Error::InvalidInput("annotation has no grasp points".into()));
        }
        let sk = &annotation.skeleton;
        let spec = sk.spec();
        let assigned: Vec<Option<usize>> = annotation
            .grasp_points
            .iter()
            .map(|p| {
                let (l, d) = sk.nearest_link_with_distance(p);
                (d <= cfg.distance_cap * sk.link_lengths()[l]).then_some(l)
            })
            .collect();

        let mut keypoints = Vec::new();
        for k in spec.linked_keypoints() {
            let links = spec.links_of(k);
            let near: Vec<Point3<f64>> = annotation
                .grasp_points
                .iter()
                .zip(&assigned)
                .filter(|(_, l)| l.is_some_and(|l| links.contains(&l)))
                .map(|(p, _)| *p)
                .collect();
            let low_data = near.len() < MIN_KEYPOINT_POINTS;
            let pts = if low_data { &annotation.grasp_points } else { &near };
            let dirs: Vec<[f64; 2]> = pts.iter().map(|p| direction(sk, k, p)).collect::<Result<_>>()?;
            let max_k = if low_data { 1 } else { cfg.max_components };
            let sel = select_by_bic(&dirs, max_k, cfg.seed.wrapping_add(k as u64))?;
            let gmm = sel.best.gmm;
            let normalizer = gmm.peak_density();
            if !(normalizer > 0.0 && normalizer.is_finite()) {
                return Err(Error::Numerical(format!("keypoint {k} normalizer {normalizer}")));
            }
            keypoints.push(KeypointGmm {
                keypoint: k,
                name: spec.keypoints[k].clone(),
                components: gmm.components,
                normalizer,
                low_data,
                n_points: dirs.len(),
                bic: sel.bic,
            });
        }
        Ok(Self {
            class: annotation.class.clone(),
            task: annotation.task.clone(),
            skeleton: spec.clone(),
            link_lengths: sk.link_lengths().to_vec(),
            distance_cap: cfg.distance_cap,
            keypoints,
            metadata: TrainingMetadata {
                seed: cfg.seed,
                max_components: cfg.max_components,
                grasp_points: annotation.grasp_points.len(),
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.skeleton.validate()?;
        if !(self.distance_cap > 0.0) {
            return Err(Error::InvalidInput("distance cap must be positive".into()));
        }
        for k in self.skeleton.linked_keypoints() {
            let g = self
                .keypoint(k)
                .ok_or_else(|| Error::InvalidInput(format!("model lacks a mixture for keypoint {k}")))?;
            g.gmm().validate()?;
            if !(g.normalizer > 0.0 && g.normalizer.is_finite()) {
                return Err(Error::InvalidInput(format!("keypoint {k} normalizer {}", g.normalizer)));
            }
        }
        Ok(())
    }

    pub fn keypoint(&self, k: usize) -> Option<&KeypointGmm> {
        self.keypoints.iter().find(|g| g.keypoint == k)
    }

    /// Errors unless `skeleton` has this model's topology.
    pub fn check_skeleton(&self, skeleton: &Skeleton) -> Result<()> {
        if !self.skeleton.is_compatible(skeleton.spec()) {
            return Err(Error::InvalidInput(format!(
                "skeleton of `{}` does not match the `{}` model topology",
                skeleton.spec().class,
                self.class
            )));
        }
        Ok(())
    }

    /// Task probability of one surface point, and whether a keypoint term
    /// was clamped to 1.
    pub fn score_point(&self, skeleton: &Skeleton, p: &Point3<f64>) -> Result<(f64, bool)> {
        self.check_skeleton(skeleton)?;
        Ok(self.score_unchecked(skeleton, p))
    }

    fn score_unchecked(&self, skeleton: &Skeleton, p: &Point3<f64>) -> (f64, bool) {
        let (l, d) = skeleton.nearest_link_with_distance(p);
        if d > self.distance_cap * skeleton.link_lengths()[l] {
            return (0.0, false);
        }
        let mut score = 1.0;
        let mut clamped = false;
        for &k in &skeleton.spec().links[l] {
            let g = self.keypoint(k).expect("validated model covers linked keypoints");
            // a point on the keypoint itself takes the pole
            let x = direction(skeleton, k, p).unwrap_or([0.0, 0.0]);
            let v = g.gmm().density(x) / g.normalizer;
            if v > 1.0 {
                clamped = true;
            }
            score *= v.clamp(0.0, 1.0);
        }
        (score, clamped)
    }

    pub fn score_surface(&self, skeleton: &Skeleton, cloud: &SurfaceCloud) -> Result<ScoredSurface> {
        self.check_skeleton(skeleton)?;
        let clamped = AtomicUsize::new(0);
        let scores = cloud
            .positions
            .par_iter()
            .map(|p| {
                let (s, c) = self.score_unchecked(skeleton, p);
                if c {
                    clamped.fetch_add(1, Ordering::Relaxed);
                }
                s
            })
            .collect();
        Ok(ScoredSurface {
            scores,
            clamped: clamped.into_inner(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = crate::io::read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

/// Task scores of a cloud, or all ones without a model.
pub fn score_surface(model: Option<&TaskModel>, skeleton: Option<&Skeleton>, cloud: &SurfaceCloud) -> Result<ScoredSurface> {
    match (model, skeleton) {
        (None, _) => Ok(ScoredSurface {
            scores: vec![1.0; cloud.len()],
            clamped: 0,
        }),
        (Some(m), Some(sk)) => m.score_surface(sk, cloud),
        (Some(_), None) => Err(Error::InvalidInput("task scoring needs a skeleton".into())),
    }
}

/// Elementwise product of per-point constraint scores; all ones for none.
pub fn combine_constraints(len: usize, constraints: &[&[f64]]) -> Result<Vec<f64>> {
    let mut out = vec![1.0; len];
    for c in constraints {
        if c.len() != len {
            return Err(Error::InvalidInput(format!("constraint has {} values, expected {len}", c.len())));
        }
        for (o, v) in out.iter_mut().zip(c.iter()) {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::InvalidScore(*v));
            }
            *o *= v;
        }
    }
    Ok(out)
}

fn direction(sk: &Skeleton, k: usize, p: &Point3<f64>) -> Result<[f64; 2]> {
    sk.spherical(k, p).map(|(t, f)| [t, f])
}
