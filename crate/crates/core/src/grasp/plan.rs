//! Candidate sampling, ranking and local refinement.

use log::warn;
use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{combined_score, contact_angle_score, surface_quality_score, Contact, GraspScore, ScoreConfig};
use super::gripper::{check_collision, close_gripper, pose_gripper, CloseOutcome, GripperModel, TablePlane};
use crate::error::{Error, RejectionStats, Result};
use crate::fusion::SurfaceCloud;
use crate::pose::pose_to_row_major;
use crate::skeleton::Skeleton;
use crate::task::{ScoredSurface, TaskModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub samples: usize,
    /// roll offsets about the closing axis tried at every sample, rad
    pub rolls: Vec<f64>,
    pub refine_iterations: usize,
    /// rad
    pub rotation_offset: f64,
    /// mm
    pub position_offset: f64,
    pub seed: u64,
    pub table: TablePlane,
    /// mm
    pub collision_margin: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        let r = 20f64.to_radians();
        Self {
            samples: 45,
            rolls: vec![0.0, r, -r],
            refine_iterations: 3,
            rotation_offset: 15f64.to_radians(),
            position_offset: 5.0,
            seed: 0,
            table: TablePlane::default(),
            collision_margin: 2.0,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidConfig("samples must be >= 1".into()));
        }
        if self.rolls.is_empty() || self.rolls.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidConfig("need at least one finite roll".into()));
        }
        if !(self.rotation_offset > 0.0) || !(self.position_offset > 0.0) {
            return Err(Error::InvalidConfig("refinement offsets must be positive".into()));
        }
        if !(self.collision_margin >= 0.0) {
            return Err(Error::InvalidConfig("collision margin must be non-negative".into()));
        }
        self.table.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Scored,
    InvalidPose,
    Unclosed,
    Penetrating,
    Collided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub position: [f64; 3],
    pub normal: [f64; 3],
    pub closing: [f64; 3],
    pub c: f64,
    pub u: f64,
    /// mean task score of the points under the pad
    pub task: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspCandidate {
    /// position in the unranked candidate list
    pub index: usize,
    /// cloud index of the sampled start point
    pub point: usize,
    pub roll: f64,
    pub pose: Isometry3<f64>,
    pub fallback_axis: bool,
    pub status: CandidateStatus,
    pub opening: Option<f64>,
    pub contacts: Vec<Contact>,
    pub contact_task: Vec<f64>,
    pub score: Option<GraspScore>,
}

impl GraspCandidate {
    pub fn total(&self) -> f64 {
        self.score.map_or(f64::NEG_INFINITY, |s| s.total)
    }

    pub fn to_record(&self) -> CandidateRecord {
        CandidateRecord {
            index: self.index,
            point: self.point,
            roll: self.roll,
            pose: pose_to_row_major(&self.pose).to_vec(),
            fallback_axis: self.fallback_axis,
            status: self.status,
            opening: self.opening,
            contacts: self
                .contacts
                .iter()
                .zip(&self.contact_task)
                .map(|(c, t)| ContactRecord {
                    position: c.position.coords.into(),
                    normal: c.normal.into(),
                    closing: c.closing.into(),
                    c: c.uncertainty,
                    u: c.variation,
                    task: *t,
                })
                .collect(),
            score: self.score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    pub point: usize,
    pub roll: f64,
    /// world <- gripper, 4x4 row-major
    pub pose: Vec<f64>,
    pub fallback_axis: bool,
    pub status: CandidateStatus,
    pub opening: Option<f64>,
    pub contacts: Vec<ContactRecord>,
    pub score: Option<GraspScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// start points in draw order
    pub samples: Vec<usize>,
    /// every candidate, best first; unscored ones trail in index order
    pub ranked: Vec<GraspCandidate>,
    pub stats: RejectionStats,
    /// best candidate before refinement
    pub initial_best: GraspCandidate,
    pub refined: GraspCandidate,
    /// best total after each refinement iteration
    pub refinement_history: Vec<f64>,
    pub baseline: bool,
}

/// JSON form of a [`PlanResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub seed: u64,
    pub baseline: bool,
    pub samples: Vec<usize>,
    pub stats: RejectionStats,
    pub best: CandidateRecord,
    pub initial_best_total: f64,
    pub refinement_history: Vec<f64>,
    pub candidates: Vec<CandidateRecord>,
}

impl PlanResult {
    pub fn to_output(&self, seed: u64) -> PlanOutput {
        PlanOutput {
            seed,
            baseline: self.baseline,
            samples: self.samples.clone(),
            stats: self.stats.clone(),
            best: self.refined.to_record(),
            initial_best_total: self.initial_best.total(),
            refinement_history: self.refinement_history.clone(),
            candidates: self.ranked.iter().map(GraspCandidate::to_record).collect(),
        }
    }
}

/// Draws `n` start points without replacement with probability proportional
/// to `weights` (uniform when absent or all zero). Once every positive-weight
/// point is taken the rest are drawn with replacement from them.
pub fn sample_start_points(n_points: usize, weights: Option<&[f64]>, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if n_points == 0 {
        return Err(Error::InvalidInput("cannot sample from an empty cloud".into()));
    }
    let mut w: Vec<f64> = match weights {
        Some(t) => {
            if t.len() != n_points {
                return Err(Error::InvalidInput(format!("{} task scores for {n_points} points", t.len())));
            }
            if let Some(bad) = t.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidScore(*bad));
            }
            t.to_vec()
        }
        None => vec![1.0; n_points],
    };
    if w.iter().all(|v| *v == 0.0) {
        w.iter_mut().for_each(|v| *v = 1.0);
    }
    let n = if n > n_points {
        warn!("{n} start points requested from {n_points}; sampling all");
        n_points
    } else {
        n
    };
    let original = w.clone();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let total: f64 = w.iter().sum();
        let pool = if total > 0.0 { &w } else { &original };
        let idx = draw(pool, rng);
        w[idx] = 0.0;
        out.push(idx);
    }
    Ok(out)
}

fn draw(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut t = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            if t < *w {
                return i;
            }
            t -= w;
            last = i;
        }
    }
    last
}

/// Closes, checks and scores one gripper pose.
pub fn evaluate_pose(
    pose: Isometry3<f64>,
    cloud: &SurfaceCloud,
    task_scores: Option<&[f64]>,
    gripper: &GripperModel,
    plan: &PlanConfig,
    score: &ScoreConfig,
) -> Result<GraspCandidate> {
    let mut cand = GraspCandidate {
        index: 0,
        point: 0,
        roll: 0.0,
        pose,
        fallback_axis: false,
        status: CandidateStatus::InvalidPose,
        opening: None,
        contacts: Vec::new(),
        contact_task: Vec::new(),
        score: None,
    };
    let closure = match close_gripper(&pose, gripper, cloud) {
        Err(Error::InvalidPose(_)) => return Ok(cand),
        Err(e) => return Err(e),
        Ok(CloseOutcome::Unclosed) => {
            cand.status = CandidateStatus::Unclosed;
            return Ok(cand);
        }
        Ok(CloseOutcome::Penetrating) => {
            cand.status = CandidateStatus::Penetrating;
            return Ok(cand);
        }
        Ok(CloseOutcome::Closed(c)) => c,
    };
    cand.opening = Some(closure.opening);
    cand.contacts = closure.contacts.to_vec();
    let pad_task = |idx: &[usize]| match task_scores {
        Some(t) => idx.iter().map(|i| t[*i]).sum::<f64>() / idx.len() as f64,
        None => 1.0,
    };
    cand.contact_task = vec![pad_task(&closure.fixed_points), pad_task(&closure.moving_points)];
    if !check_collision(&pose, gripper, closure.opening, &plan.table, plan.collision_margin) {
        cand.status = CandidateStatus::Collided;
        return Ok(cand);
    }
    let p1 = contact_angle_score(&cand.contacts, score.friction_cone)?;
    let p2 = surface_quality_score(&cand.contacts, score.c_max)?;
    // geometric mean over contacts
    let p3 = match task_scores {
        Some(_) => cand
            .contact_task
            .iter()
            .product::<f64>()
            .powf(1.0 / cand.contact_task.len() as f64)
            .clamp(0.0, 1.0),
        None => 1.0,
    };
    cand.score = Some(combined_score(p1, p2, p3, score)?);
    cand.status = CandidateStatus::Scored;
    Ok(cand)
}

/// Samples, scores and ranks candidates, then refines the best one.
/// Without task scores the planner runs in baseline mode.
pub fn plan(
    cloud: &SurfaceCloud,
    task_scores: Option<&[f64]>,
    gripper: &GripperModel,
    cfg: &PlanConfig,
    score: &ScoreConfig,
) -> Result<PlanResult> {
    cfg.validate()?;
    gripper.validate()?;
    cloud.validate()?;
    let baseline = task_scores.is_none();
    let score_cfg = if baseline { score.baseline()? } else { *score };
    score_cfg.validate()?;
    let up = cfg.table.normal;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = sample_start_points(cloud.len(), task_scores, cfg.samples, &mut rng)?;
    let jobs: Vec<(usize, usize, f64)> = samples
        .iter()
        .flat_map(|&p| cfg.rolls.iter().map(move |&r| (p, r)))
        .enumerate()
        .map(|(i, (p, r))| (i, p, r))
        .collect();
    let candidates: Vec<GraspCandidate> = jobs
        .par_iter()
        .map(|&(index, point, roll)| {
            let (pose, fallback) = pose_gripper(&cloud.positions[point], &cloud.normals[point], roll, &up)?;
            let mut c = evaluate_pose(pose, cloud, task_scores, gripper, cfg, &score_cfg)?;
            c.index = index;
            c.point = point;
            c.roll = roll;
            c.fallback_axis = fallback;
            Ok(c)
        })
        .collect::<Result<_>>()?;

    let mut stats = RejectionStats {
        evaluated: candidates.len(),
        ..Default::default()
    };
    for c in &candidates {
        match c.status {
            CandidateStatus::Scored => stats.scored += 1,
            CandidateStatus::InvalidPose => stats.invalid_pose += 1,
            CandidateStatus::Unclosed => stats.unclosed += 1,
            CandidateStatus::Penetrating => stats.object_penetration += 1,
            CandidateStatus::Collided => stats.table_collision += 1,
        }
    }
    if stats.scored == 0 {
        return Err(Error::NoGraspFound(stats));
    }
    let mut ranked = candidates;
    ranked.sort_by(|a, b| b.total().total_cmp(&a.total()).then(a.index.cmp(&b.index)));
    let initial_best = ranked[0].clone();
    let (refined, refinement_history) = refine(&initial_best, cloud, task_scores, gripper, cfg, &score_cfg)?;
    Ok(PlanResult {
        samples,
        ranked,
        stats,
        initial_best,
        refined,
        refinement_history,
        baseline,
    })
}

/// Scores the cloud against a task model and plans with the result; without
/// a model this is the baseline planner.
pub fn plan_for_task(
    cloud: &SurfaceCloud,
    task: Option<(&TaskModel, &Skeleton)>,
    gripper: &GripperModel,
    cfg: &PlanConfig,
    score: &ScoreConfig,
) -> Result<(PlanResult, Option<ScoredSurface>)> {
    match task {
        None => Ok((plan(cloud, None, gripper, cfg, score)?, None)),
        Some((model, skeleton)) => {
            let scored = model.score_surface(skeleton, cloud)?;
            let res = plan(cloud, Some(&scored.scores), gripper, cfg, score)?;
            Ok((res, Some(scored)))
        }
    }
}

/// Greedy coordinate search over rotations about, then translations along,
/// each gripper axis. Offsets halve after every iteration; a move is kept
/// only if it raises the total.
pub fn refine(
    start: &GraspCandidate,
    cloud: &SurfaceCloud,
    task_scores: Option<&[f64]>,
    gripper: &GripperModel,
    cfg: &PlanConfig,
    score: &ScoreConfig,
) -> Result<(GraspCandidate, Vec<f64>)> {
    let mut best = start.clone();
    let mut history = Vec::with_capacity(cfg.refine_iterations);
    let mut rot = cfg.rotation_offset;
    let mut step = cfg.position_offset;
    for _ in 0..cfg.refine_iterations {
        for axis in 0..3 {
            let a = Vector3::ith(axis, 1.0);
            let moves = [
                UnitQuaternion::from_axis_angle(&Unit::new_unchecked(a), rot),
                UnitQuaternion::from_axis_angle(&Unit::new_unchecked(a), -rot),
            ];
            let trials: Vec<Isometry3<f64>> = moves
                .iter()
                .map(|q| best.pose * Isometry3::from_parts(Translation3::identity(), *q))
                .collect();
            try_moves(&mut best, &trials, cloud, task_scores, gripper, cfg, score)?;
        }
        for axis in 0..3 {
            let a = Vector3::ith(axis, step);
            let trials: Vec<Isometry3<f64>> = [a, -a]
                .iter()
                .map(|t| best.pose * Isometry3::from_parts(Translation3::from(*t), UnitQuaternion::identity()))
                .collect();
            try_moves(&mut best, &trials, cloud, task_scores, gripper, cfg, score)?;
        }
        history.push(best.total());
        rot /= 2.0;
        step /= 2.0;
    }
    Ok((best, history))
}

fn try_moves(
    best: &mut GraspCandidate,
    trials: &[Isometry3<f64>],
    cloud: &SurfaceCloud,
    task_scores: Option<&[f64]>,
    gripper: &GripperModel,
    cfg: &PlanConfig,
    score: &ScoreConfig,
) -> Result<()> {
    let mut pick: Option<GraspCandidate> = None;
    for pose in trials {
        let c = evaluate_pose(*pose, cloud, task_scores, gripper, cfg, score)?;
        if c.status == CandidateStatus::Scored && c.total() > pick.as_ref().map_or(best.total(), |p| p.total()) {
            pick = Some(c);
        }
    }
    if let Some(mut c) = pick {
        c.index = best.index;
        c.point = best.point;
        c.roll = best.roll;
        c.fallback_axis = best.fallback_axis;
        *best = c;
    }
    Ok(())
}
