//! Keypoint skeletons: class topology, multi-view triangulation, per-keypoint
//! frames and the spherical encoding of surface points.

mod instance;
mod spec;
mod triangulate;

pub use instance::{segment_distance, to_spherical, KeypointFrame, Skeleton, SkeletonFile, MIN_PLANE_SINE};
pub use spec::{FrameRule, SkeletonSpec};
pub use triangulate::{
    intersect_rays, load_observations, read_observations, triangulate_keypoints, KeypointObservation,
    ObservationRecord, TriangulatedKeypoint, DEFAULT_MIN_VIEWS, MIN_RAY_CONDITION,
};
