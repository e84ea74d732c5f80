//! Task constraints learned from one annotated exemplar: direction mixtures
//! at each keypoint and the per-point task probability they induce.

pub mod gmm;
mod model;

pub use gmm::{Component, Gmm, COVARIANCE_FLOOR, DEFAULT_MAX_COMPONENTS};
pub use model::{
    combine_constraints, score_surface, AnnotationFile, ExemplarAnnotation, KeypointGmm, ScoredSurface, TaskModel,
    TrainConfig, TrainingMetadata, DEFAULT_DISTANCE_CAP, MIN_KEYPOINT_POINTS,
};
