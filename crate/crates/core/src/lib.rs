//! Task-aware grasp planning for tabletop objects.
//!
//! The pipeline fuses masked depth frames into a probabilistic signed-distance
//! volume ([`fusion`]), lifts a keypoint skeleton from multi-view detections
//! ([`skeleton`]), learns where a task wants the object held from a single
//! annotated exemplar ([`task`]), and samples, closes, scores and refines
//! parallel-jaw grasps ([`grasp`]). [`synth`] renders synthetic scenes for
//! testing the whole chain without a camera.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fusion;
pub mod grasp;
pub mod io;
pub mod pose;
pub mod sensor;
pub mod skeleton;
pub mod spatial;
pub mod synth;
pub mod task;

pub use error::{Error, ErrorKind, Result};
