//! Gripper model, grasp scoring and the sampling planner.

pub mod eval;
pub mod gripper;
mod plan;

pub use eval::{
    combined_score, contact_angle_score, contact_angle_score_from_angles, surface_quality_from_values, surface_quality_score, Contact,
    GraspScore, ScoreConfig,
};
pub use gripper::{body_vertices, check_collision, close_gripper, pose_gripper, CloseOutcome, Closure, GripperModel, TablePlane};
pub use plan::{
    evaluate_pose, plan, plan_for_task, refine, sample_start_points, CandidateRecord, CandidateStatus, ContactRecord, GraspCandidate, PlanConfig,
    PlanOutput, PlanResult,
};
