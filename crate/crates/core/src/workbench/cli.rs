//! Command-line driver. Each subcommand reads a [`RunConfig`], applies flag
//! overrides, writes its outputs and a `manifest.json` echoing the resolved
//! config, so re-running with `--config <out>/manifest.json` reproduces it.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::attack::{evolve, run as attack_run, write_run, AttackGoal};
use crate::detector::{objectness_accuracy, train, DetectorParams, LabeledScene, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::features::{hard_features, roi_filter};
use crate::geometry::{read_obj, write_stl, TriangleMesh};
use crate::postprocess::{detect_cloud, report_json};

use super::{benign_cube, evaluate, synth_scene_specs, EvalGrid, Environment, RunConfig, SceneSpec};

#[derive(Debug, Parser)]
#[command(name = "lidar-adv", version, about = "Simulated LiDAR detection and adversarial object synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// JSON config file or a previous run's manifest.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GoalArgs {
    /// hide or relabel.
    #[arg(long)]
    pub goal: Option<String>,
    /// Class the object is detected as (name or index).
    #[arg(long)]
    pub source: Option<String>,
    /// Class to relabel to (name or index).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scene layouts.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the detector on synthetic scenes.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Render the configured scene to a point cloud and feature map.
    Render {
        #[command(flatten)]
        common: Common,
    },
    /// Run the detection pipeline on the configured scene.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Gradient attack.
    Attack {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        goal: GoalArgs,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Evolution-strategy attack.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        goal: GoalArgs,
        #[arg(long)]
        generations: Option<usize>,
    },
    /// Success table over controlled and unseen poses.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        goal: GoalArgs,
    },
    /// Convert an OBJ mesh to binary STL.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        stl: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Train { .. } => "train",
            Command::Render { .. } => "render",
            Command::Detect { .. } => "detect",
            Command::Attack { .. } => "attack",
            Command::Evolve { .. } => "evolve",
            Command::Evaluate { .. } => "evaluate",
            Command::Export { .. } => "export",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Train { common, .. }
            | Command::Render { common }
            | Command::Detect { common, .. }
            | Command::Attack { common, .. }
            | Command::Evolve { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Export { common, .. } => common,
        }
    }
}

fn parse_class(s: &str) -> Result<usize> {
    if let Ok(i) = s.parse::<usize>() {
        return Ok(i);
    }
    CLASS_NAMES
        .iter()
        .position(|n| n.eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::Config(format!("unknown class '{s}'")))
}

fn apply_goal(cfg: &mut RunConfig, args: &GoalArgs) -> Result<()> {
    if let Some(w) = &args.weights {
        cfg.weights = Some(w.clone());
    }
    if let Some(m) = &args.mesh {
        cfg.mesh = Some(m.clone());
    }
    let current = match cfg.goal {
        AttackGoal::Hide => None,
        AttackGoal::Relabel { source, target } => Some((source, target)),
    };
    let source = args.source.as_deref().map(parse_class).transpose()?;
    let target = args.target.as_deref().map(parse_class).transpose()?;
    let kind = args.goal.as_deref().unwrap_or(if current.is_some() { "relabel" } else { "hide" });
    cfg.goal = match kind {
        "hide" => AttackGoal::Hide,
        "relabel" => {
            let (s0, t0) = current.unwrap_or((0, 1));
            AttackGoal::Relabel { source: source.unwrap_or(s0), target: target.unwrap_or(t0) }
        }
        other => return Err(Error::Config(format!("unknown goal '{other}' (expected hide or relabel)"))),
    };
    Ok(())
}

/// Resolve the config for a command: file, then flags, then seed propagation.
pub fn resolve(command: &Command) -> Result<RunConfig> {
    let common = command.common();
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    match command {
        Command::Synth { count, .. } => {
            if let Some(c) = count {
                cfg.synth.count = *c;
            }
        }
        Command::Train { dataset, epochs, .. } => {
            if let Some(d) = dataset {
                cfg.dataset = Some(d.clone());
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
        }
        Command::Detect { weights, .. } => {
            if let Some(w) = weights {
                cfg.weights = Some(w.clone());
            }
        }
        Command::Attack { goal, iters, .. } => {
            apply_goal(&mut cfg, goal)?;
            if let Some(i) = iters {
                cfg.attack.max_iters = *i;
            }
        }
        Command::Evolve { goal, generations, .. } => {
            apply_goal(&mut cfg, goal)?;
            if let Some(g) = generations {
                cfg.evolution.max_generations = *g;
            }
        }
        Command::Evaluate { goal, .. } => apply_goal(&mut cfg, goal)?,
        Command::Export { mesh, stl, .. } => {
            if let Some(m) = mesh {
                cfg.mesh = Some(m.clone());
            }
            if let Some(s) = stl {
                cfg.stl = Some(s.clone());
            }
        }
        Command::Render { .. } => {}
    }
    cfg.apply_seed();
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn load_weights(cfg: &RunConfig) -> Result<DetectorParams> {
    let path = cfg.weights.as_ref().ok_or_else(|| Error::Config("no detector weights given (--weights)".into()))?;
    DetectorParams::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read weights {}: {io}", path.display())),
        other => other,
    })
}

fn load_mesh(cfg: &RunConfig) -> Result<TriangleMesh> {
    match &cfg.mesh {
        Some(path) => read_obj(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read mesh {}: {io}", path.display())),
            other => other,
        }),
        None => benign_cube(cfg.cube_vertices),
    }
}

fn labeled(scenes: &[SceneSpec], env: &Environment) -> Result<Vec<LabeledScene>> {
    scenes.iter().map(|s| s.labeled(env)).collect()
}

fn training_scenes(cfg: &RunConfig) -> Result<Vec<SceneSpec>> {
    match &cfg.dataset {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read dataset {}: {e}", path.display())))?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let scenes = value.get("scenes").cloned().unwrap_or(value);
            Ok(serde_json::from_value(scenes)?)
        }
        None => synth_scene_specs(&cfg.synth, cfg.train.classes, cfg.seed),
    }
}

/// Execute a command; returns the names of the files written.
pub fn execute(command: &Command, cfg: &RunConfig) -> Result<Vec<String>> {
    let out = &command.common().out;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut emit = |name: &str| written.push(name.to_string());
    match command {
        Command::Synth { .. } => {
            let scenes = synth_scene_specs(&cfg.synth, cfg.train.classes, cfg.seed)?;
            let background_only = scenes.iter().filter(|s| s.objects.is_empty()).count();
            write_json(
                &out.join("dataset.json"),
                &json!({"count": scenes.len(), "background_only": background_only, "scenes": scenes}),
            )?;
            emit("dataset.json");
        }
        Command::Train { .. } => {
            let env = Environment::build(&cfg.environment)?;
            let scenes = labeled(&training_scenes(cfg)?, &env)?;
            let holdout_cfg = super::SynthConfig { count: cfg.holdout.max(1), ..cfg.synth.clone() };
            let holdout = labeled(&synth_scene_specs(&holdout_cfg, cfg.train.classes, cfg.seed.wrapping_add(1))?, &env)?;
            let (params, report) = train(&scenes, &cfg.train)?;
            let accuracy = objectness_accuracy(&params, &holdout)?;
            params.save(out.join("weights.json"))?;
            emit("weights.json");
            write_json(
                &out.join("train_report.json"),
                &json!({"report": report, "holdout_scenes": holdout.len(), "holdout_objectness_accuracy": accuracy}),
            )?;
            emit("train_report.json");
        }
        Command::Render { .. } => {
            let env = Environment::build(&cfg.environment)?;
            cfg.scene.validate(&env.spec)?;
            let cloud = cfg.scene.render(&env)?;
            cloud.write(out.join(&cfg.cloud_file))?;
            emit(&cfg.cloud_file);
            hard_features(&roi_filter(&cloud, &env.spec), &env.spec).export(&env.spec, out.join("features"))?;
            emit("features.bin");
            emit("features.json");
        }
        Command::Detect { .. } => {
            let env = Environment::build(&cfg.environment)?;
            cfg.scene.validate(&env.spec)?;
            let params = load_weights(cfg)?;
            let obstacles = detect_cloud(&cfg.scene.render(&env)?, &env.spec, &params)?;
            std::fs::write(out.join("detections.json"), report_json(&obstacles))?;
            emit("detections.json");
        }
        Command::Attack { .. } | Command::Evolve { .. } => {
            let env = Environment::build(&cfg.environment)?;
            let scene = env.attack_scene(load_weights(cfg)?);
            let mesh = load_mesh(cfg)?;
            let (result, section) = if matches!(command, Command::Attack { .. }) {
                (attack_run(&mesh, &cfg.goal, &cfg.attack, &scene)?, serde_json::to_value(&cfg.attack)?)
            } else {
                (evolve(&mesh, &cfg.goal, &cfg.evolution, &scene)?, serde_json::to_value(&cfg.evolution)?)
            };
            write_run(out, &mesh, &result, &json!({"goal": cfg.goal, "optimizer": section, "seed": cfg.seed}))?;
            for f in ["input.obj", "adversarial.obj", "adversarial.stl", "result.json"] {
                emit(f);
            }
        }
        Command::Evaluate { .. } => {
            let env = Environment::build(&cfg.environment)?;
            let scene = env.attack_scene(load_weights(cfg)?);
            let mesh = load_mesh(cfg)?;
            let report = evaluate(&mesh, &EvalGrid::build(&cfg.eval), &cfg.goal, &scene)?;
            write_json(&out.join("evaluation.json"), &report)?;
            emit("evaluation.json");
        }
        Command::Export { .. } => {
            let mesh = load_mesh(cfg)?;
            let name = cfg.stl.clone().unwrap_or_else(|| PathBuf::from("mesh.stl"));
            let path = if name.is_absolute() { name.clone() } else { out.join(&name) };
            write_stl(&mesh, &path)?;
            emit(&name.to_string_lossy());
        }
    }
    Ok(written)
}

/// Resolve, execute and write the manifest.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(&cli.command)?;
    let outputs = execute(&cli.command, &cfg)?;
    let manifest = json!({
        "tool": "lidar-adv",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "config": cfg,
        "outputs": outputs,
    });
    write_json(&cli.command.common().out.join("manifest.json"), &manifest)
}
