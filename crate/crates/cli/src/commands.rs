//! One function per subcommand. Each reads its inputs from the resolved
//! config, writes its artifacts into the output directory and records the
//! run seed in them.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use taskgrasp::fusion::{fuse_frames, IntegrationStats, SurfaceCloud};
use taskgrasp::grasp::{body_vertices, plan_for_task, CandidateRecord};
use taskgrasp::io::{read_cloud, read_frame_dir, read_json, write_cloud, write_frame, write_json, ScalarKind, VertexTable};
use taskgrasp::skeleton::{load_observations, KeypointObservation, Skeleton, SkeletonFile, SkeletonSpec};
use taskgrasp::synth::{Scene, SceneSpec};
use taskgrasp::task::{score_surface as score_cloud, ExemplarAnnotation, TaskModel};
use taskgrasp::Error;

use crate::config::RunConfig;
use crate::ramp::viridis;
use crate::{Failure, Stage};

type Outcome = Result<(), Failure>;

fn need<'a>(p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, Failure> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidConfig(format!("no {name} path given (config `paths.{name}` or `--{}`)", name.replace('_', "-"))))
        .stage("config")
}

fn seed_comment(cfg: &RunConfig) -> String {
    format!("seed {}", cfg.seed)
}

#[derive(Serialize)]
struct FuseSummary<'a> {
    seed: u64,
    voxel_size: f64,
    frames: usize,
    points: usize,
    volume: &'a str,
    cloud: &'a str,
    stats: &'a [IntegrationStats],
}

pub fn fuse(cfg: &RunConfig) -> Outcome {
    let dir = need(&cfg.paths.frames, "frames")?;
    let frames = read_frame_dir(dir).stage("read frames")?;
    let fcfg = cfg.fusion_config();
    let fused = fuse_frames(&frames, &fcfg).stage("fuse")?;
    info!("fused {} frames into {} points", frames.len(), fused.cloud.len());
    fused.volume.save(&cfg.out.join("volume.psdf")).stage("write")?;
    let comments = [seed_comment(cfg), format!("voxel_size {}", fcfg.voxel_size)];
    write_cloud(&cfg.out.join("cloud.ply"), &fused.cloud, &comments).stage("write")?;
    let summary = FuseSummary {
        seed: cfg.seed,
        voxel_size: fcfg.voxel_size,
        frames: frames.len(),
        points: fused.cloud.len(),
        volume: "volume.psdf",
        cloud: "cloud.ply",
        stats: &fused.stats,
    };
    write_json(&cfg.out.join("fuse.json"), &summary).stage("write")
}

pub fn triangulate(cfg: &RunConfig) -> Outcome {
    let spec: SkeletonSpec = read_json(need(&cfg.paths.skeleton_spec, "skeleton_spec")?).stage("read skeleton spec")?;
    spec.validate().stage("read skeleton spec")?;
    let obs_path = need(&cfg.paths.observations, "observations")?;
    let obs = load_observations(obs_path).stage("read observations")?;
    if obs.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no observations", obs_path.display()))).stage("read observations");
    }
    let tri = taskgrasp::skeleton::triangulate_keypoints(&obs, spec.keypoints.len(), cfg.triangulate.min_views)
        .stage("triangulate")?;
    let residuals = Some(tri.iter().map(|t| t.map(|t| t.residual)).collect());
    let mut file = if tri.iter().all(Option::is_some) {
        let cloud = match &cfg.paths.cloud {
            Some(p) => Some(read_cloud(p).stage("read cloud")?),
            None => None,
        };
        let positions = tri.iter().flatten().map(|t| t.position).collect();
        let sk = Skeleton::new(spec, positions, cloud.as_ref().map(|c| c.positions.as_slice())).stage("frames")?;
        sk.to_file()
    } else {
        let missing: Vec<String> = spec
            .keypoints
            .iter()
            .zip(&tri)
            .filter(|(_, t)| t.is_none())
            .map(|(n, _)| n.clone())
            .collect();
        log::warn!("keypoints seen in too few views: {}", missing.join(", "));
        SkeletonFile {
            positions: tri.iter().map(|t| t.map(|t| t.position.coords.into())).collect(),
            spec,
            residuals: None,
            link_lengths: Vec::new(),
            link_frames: Vec::new(),
            missing,
            seed: None,
        }
    };
    file.residuals = residuals;
    file.seed = Some(cfg.seed);
    write_json(&cfg.out.join("skeleton.json"), &file).stage("write")
}

pub fn train(cfg: &RunConfig) -> Outcome {
    let ann = ExemplarAnnotation::load(need(&cfg.paths.annotation, "annotation")?).stage("read annotation")?;
    let model = TaskModel::train(&ann, &cfg.train_config()).stage("train")?;
    if model.keypoints.iter().any(|k| k.low_data) {
        log::warn!("some keypoints had fewer than 3 grasp points and use a single component");
    }
    model.save(&cfg.out.join("task_model.json")).stage("write")
}

/// Cloud plus the task model and skeleton, unless running baseline.
fn scoring_inputs(cfg: &RunConfig) -> Result<(SurfaceCloud, Option<(TaskModel, Skeleton)>), Failure> {
    let cloud = read_cloud(need(&cfg.paths.cloud, "cloud")?).stage("read cloud")?;
    if cfg.baseline {
        return Ok((cloud, None));
    }
    let Some(model_path) = &cfg.paths.task_model else {
        info!("no task model given, running baseline");
        return Ok((cloud, None));
    };
    let model = TaskModel::load(model_path).stage("read task model")?;
    let file: SkeletonFile = read_json(need(&cfg.paths.skeleton, "skeleton")?).stage("read skeleton")?;
    let skeleton = Skeleton::from_file(&file).stage("read skeleton")?;
    Ok((cloud, Some((model, skeleton))))
}

#[derive(Serialize)]
struct ScoresFile {
    seed: u64,
    baseline: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    class: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<String>,
    clamped: usize,
    scores: Vec<f64>,
}

fn scores_of(cloud: &SurfaceCloud, task: &Option<(TaskModel, Skeleton)>) -> Result<ScoresFile, Failure> {
    let s = score_cloud(task.as_ref().map(|t| &t.0), task.as_ref().map(|t| &t.1), cloud).stage("score")?;
    Ok(ScoresFile {
        seed: 0,
        baseline: task.is_none(),
        class: task.as_ref().map(|t| t.0.class.clone()),
        task: task.as_ref().map(|t| t.0.task.clone()),
        clamped: s.clamped,
        scores: s.scores,
    })
}

pub fn score_surface(cfg: &RunConfig) -> Outcome {
    let (cloud, task) = scoring_inputs(cfg)?;
    let mut file = scores_of(&cloud, &task)?;
    file.seed = cfg.seed;
    write_json(&cfg.out.join("scores.json"), &file).stage("write")
}

pub fn heatmap(cfg: &RunConfig) -> Outcome {
    let (cloud, task) = scoring_inputs(cfg)?;
    let s = scores_of(&cloud, &task)?;
    let mut comments = vec![seed_comment(cfg)];
    if let (Some(c), Some(t)) = (&s.class, &s.task) {
        comments.push(format!("task {c} {t}"));
    } else {
        comments.push("baseline".into());
    }
    let mut table = VertexTable {
        comments,
        columns: Vec::new(),
    };
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        table.push_column(name, ScalarKind::F32, cloud.positions.iter().map(|p| p[a]).collect());
    }
    for (a, name) in ["nx", "ny", "nz"].iter().enumerate() {
        table.push_column(name, ScalarKind::F32, cloud.normals.iter().map(|n| n[a]).collect());
    }
    let rgb: Vec<[u8; 3]> = s.scores.iter().map(|v| viridis(*v)).collect();
    for (c, name) in ["red", "green", "blue"].iter().enumerate() {
        table.push_column(name, ScalarKind::U8, rgb.iter().map(|p| p[c] as f64).collect());
    }
    table.push_column("score", ScalarKind::F64, s.scores);
    table.save(&cfg.out.join("heatmap.ply")).stage("write")
}

pub fn plan(cfg: &RunConfig, overlay: bool) -> Outcome {
    let (cloud, task) = scoring_inputs(cfg)?;
    let score = cfg.score_config().stage("config")?;
    let (result, _) = plan_for_task(
        &cloud,
        task.as_ref().map(|(m, s)| (m, s)),
        &cfg.gripper,
        &cfg.plan_config(),
        &score,
    )
    .stage("plan")?;
    info!("{}", result.stats);
    let out = result.to_output(cfg.seed);
    write_json(&cfg.out.join("grasp.json"), &out).stage("write")?;
    if overlay {
        write_overlay(&cfg.out.join("contacts.ply"), cfg, &cloud, &out.best, &result.refined.pose)?;
    }
    Ok(())
}

/// Cloud in grey, contacts in red, gripper body corners in blue; `kind` is
/// 0, 1 and 2 respectively.
fn write_overlay(
    path: &Path,
    cfg: &RunConfig,
    cloud: &SurfaceCloud,
    best: &CandidateRecord,
    pose: &nalgebra::Isometry3<f64>,
) -> Outcome {
    let mut pts: Vec<([f64; 3], u8)> = cloud.positions.iter().map(|p| (p.coords.into(), 0)).collect();
    pts.extend(best.contacts.iter().map(|c| (c.position, 1)));
    let opening = best.opening.unwrap_or(cfg.gripper.max_opening);
    pts.extend(body_vertices(pose, &cfg.gripper, opening).iter().map(|p| (p.coords.into(), 2)));
    let mut table = VertexTable {
        comments: vec![seed_comment(cfg)],
        columns: Vec::new(),
    };
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        table.push_column(name, ScalarKind::F32, pts.iter().map(|p| p.0[a]).collect());
    }
    const COLOURS: [[u8; 3]; 3] = [[160, 160, 160], [230, 30, 30], [40, 80, 230]];
    for (c, name) in ["red", "green", "blue"].iter().enumerate() {
        table.push_column(name, ScalarKind::U8, pts.iter().map(|p| COLOURS[p.1 as usize][c] as f64).collect());
    }
    table.push_column("kind", ScalarKind::U8, pts.iter().map(|p| p.1 as f64).collect());
    table.save(path).stage("write")
}

pub fn render(cfg: &RunConfig) -> Outcome {
    let mut spec: SceneSpec = read_json(need(&cfg.paths.scene, "scene")?).stage("read scene")?;
    spec.seed = cfg.seed;
    let scene = Scene::build(&spec).stage("scene")?;
    let frames = scene.render_all().stage("render")?;
    for (i, f) in frames.iter().enumerate() {
        write_frame(&cfg.out, i, f, Some(cfg.seed)).stage("write")?;
    }
    write_json(&cfg.out.join("scene.json"), &spec).stage("write")?;
    match spec.object.skeleton() {
        Ok((sk_spec, local)) => {
            write_json(&cfg.out.join("skeleton_spec.json"), &sk_spec).stage("write")?;
            write_observations(&cfg.out.join("observations.jsonl"), &scene, &local)?;
        }
        Err(Error::UnsupportedShape(s)) => info!("{s} has no skeleton; no keypoint observations written"),
        Err(e) => return Err(e).stage("skeleton"),
    }
    Ok(())
}

/// Exact projections of the ground-truth keypoints into every view they
/// fall inside of. Occlusion is ignored, as a keypoint detector would.
fn write_observations(path: &Path, scene: &Scene, local: &[nalgebra::Point3<f64>]) -> Outcome {
    let mut text = String::new();
    for (view, cam) in scene.cameras.iter().enumerate() {
        for (k, p) in local.iter().enumerate() {
            let in_cam = cam.inverse() * (scene.pose * p);
            let Some(px) = scene.intrinsics.project(&in_cam) else { continue };
            let Ok(obs) = KeypointObservation::new(view as u32, k, [px.x, px.y], *cam, scene.intrinsics) else {
                continue;
            };
            let line = serde_json::to_string(&obs.to_record()).map_err(|e| Error::parse("observation", e)).stage("write")?;
            text.push_str(&line);
            text.push('\n');
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e)).stage("write")?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e)).stage("write")
}
