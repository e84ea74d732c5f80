//! Synthetic scenes: analytic objects on a table, a camera ring, depth
//! rendering with sensor-model noise and ground-truth skeletons.

pub mod geometry;
pub mod mesh;
mod scene;
pub mod shapes;

pub use geometry::{Primitive, Solid};
pub use mesh::{load_obj, read_obj, TriMesh};
pub use scene::{ground_truth_skeleton, pose_record, sample_surface, CameraRing, NoiseSpec, Scene, SceneSpec};
pub use shapes::{Brush, Cup, Geometry, Hammer, Screwdriver, ShapeSpec, Wrench};
