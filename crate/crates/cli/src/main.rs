//! `taskgrasp`: command-line front end for the grasp-planning pipeline.

mod commands;
mod config;
mod ramp;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use taskgrasp::{Error, ErrorKind};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "taskgrasp", version, about = "Task-aware grasp planning from depth frames")]
struct Cli {
    #[command(flatten)]
    opts: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override the config file. All are accepted by every command.
#[derive(Debug, Args)]
struct Overrides {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// fusion voxel edge, mm
    #[arg(long, global = true, value_name = "MM")]
    voxel_size: Option<f64>,
    /// score weights w1,w2,w3
    #[arg(long, global = true, value_name = "W1,W2,W3", value_parser = parse_weights)]
    weights: Option<[f64; 3]>,
    #[arg(long, global = true, value_name = "PATH")]
    task_model: Option<PathBuf>,
    /// ignore any task model
    #[arg(long, global = true)]
    baseline: bool,
    #[arg(long, global = true, value_name = "DIR")]
    frames: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    observations: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    skeleton_spec: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    annotation: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    cloud: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    skeleton: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    scene: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuse masked depth frames into a volume and a surface cloud
    Fuse,
    /// Triangulate keypoint detections into a skeleton instance
    Triangulate,
    /// Learn a task model from an annotated exemplar
    Train,
    /// Per-point task scores of a cloud
    ScoreSurface,
    /// Plan a grasp on a cloud
    Plan {
        /// also write a PLY marking the chosen contacts
        #[arg(long)]
        overlay: bool,
    },
    /// Colour a cloud by task score
    Heatmap,
    /// Render synthetic depth frames of a scene
    Render,
    /// Print the effective configuration
    ShowConfig,
}

fn parse_weights(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 3 weights, got {}", v.len()))
}

/// An error with the command stage it came from.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> Stage<T> for taskgrasp::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

fn resolve(o: &Overrides) -> taskgrasp::Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(d) = &o.out {
        cfg.out = d.clone();
    }
    if let Some(v) = o.voxel_size {
        cfg.fusion.voxel_size = v;
    }
    if let Some(w) = o.weights {
        cfg.score.weights = w;
    }
    cfg.baseline |= o.baseline;
    let p = &mut cfg.paths;
    for (slot, flag) in [
        (&mut p.task_model, &o.task_model),
        (&mut p.frames, &o.frames),
        (&mut p.observations, &o.observations),
        (&mut p.skeleton_spec, &o.skeleton_spec),
        (&mut p.annotation, &o.annotation),
        (&mut p.cloud, &o.cloud),
        (&mut p.skeleton, &o.skeleton),
        (&mut p.scene, &o.scene),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli.opts).stage("config")?;
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml().stage("config")?);
        return Ok(());
    }
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| Error::io(&cfg.out, e))
        .stage("output")?;
    match cli.command {
        Command::Fuse => commands::fuse(&cfg),
        Command::Triangulate => commands::triangulate(&cfg),
        Command::Train => commands::train(&cfg),
        Command::ScoreSurface => commands::score_surface(&cfg),
        Command::Plan { overlay } => commands::plan(&cfg, overlay),
        Command::Heatmap => commands::heatmap(&cfg),
        Command::Render => commands::render(&cfg),
        Command::ShowConfig => unreachable!(),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Fuse => "fuse",
        Command::Triangulate => "triangulate",
        Command::Train => "train",
        Command::ScoreSurface => "score-surface",
        Command::Plan { .. } => "plan",
        Command::Heatmap => "heatmap",
        Command::Render => "render",
        Command::ShowConfig => "show-config",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { stage, error }) => {
            eprintln!("error: {name}: {stage}: {error}");
            ExitCode::from(match error.kind() {
                ErrorKind::Input => 2,
                ErrorKind::NoResult => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_flag_parses_three_values() {
        assert_eq!(parse_weights("0.5, 0.25,0.25").unwrap(), [0.5, 0.25, 0.25]);
        assert!(parse_weights("0.5,0.5").is_err());
        assert!(parse_weights("a,b,c").is_err());
    }

    #[test]
    fn flags_override_the_config() {
        let cli = Cli::parse_from(["taskgrasp", "--seed", "9", "--voxel-size", "2", "--baseline", "show-config"]);
        let cfg = resolve(&cli.opts).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.fusion.voxel_size, 2.0);
        assert!(cfg.baseline);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
