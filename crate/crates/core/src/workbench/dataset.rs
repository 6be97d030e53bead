use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::LabeledScene;
use crate::error::{Error, Result};
use crate::geometry::PrimitiveKind;

use super::scene::{ground_pose, Environment, ObjectSpec, SceneSpec, Shape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub count: usize,
    /// Fraction of scenes without objects (rounded up).
    pub background_fraction: f64,
    pub max_objects: usize,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// Minimum bearing separation between objects, degrees.
    pub min_bearing_gap: f64,
    pub vertices: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 200,
            background_fraction: 0.2,
            max_objects: 3,
            x_range: [5.0, 13.0],
            y_range: [-5.0, 5.0],
            min_bearing_gap: 10.0,
            vertices: 150,
        }
    }
}

/// Random shape for a class, at desk scale.
fn sample_shape(class: usize, rng: &mut ChaCha8Rng) -> Shape {
    let mut u = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    match class {
        0 => Shape::Box { lx: u(0.45, 0.9), ly: u(0.45, 0.9), lz: u(0.35, 0.55) },
        1 => Shape::Cylinder { diameter: u(0.25, 0.4), height: u(0.6, 0.9) },
        2 => Shape::Box { lx: u(0.8, 1.1), ly: u(0.1, 0.15), lz: u(0.6, 0.8) },
        _ => {
            let size = u(0.2, 0.35);
            let kind = if u(0.0, 1.0) < 0.5 { PrimitiveKind::Sphere } else { PrimitiveKind::Tetrahedron };
            Shape::Primitive { kind, size }
        }
    }
}

/// Deterministic scene layouts for a synthetic dataset.
pub fn synth_scene_specs(cfg: &SynthConfig, classes: usize, seed: u64) -> Result<Vec<SceneSpec>> {
    if cfg.count == 0 {
        return Err(Error::Config("dataset count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.background_fraction) {
        return Err(Error::Config("background_fraction must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_background = (cfg.background_fraction * cfg.count as f64).ceil() as usize;
    let mut is_background: Vec<bool> = (0..cfg.count).map(|i| i < n_background).collect();
    is_background.shuffle(&mut rng);
    let mut scenes = Vec::with_capacity(cfg.count);
    for (i, background) in is_background.into_iter().enumerate() {
        let mut objects: Vec<ObjectSpec> = Vec::new();
        if !background {
            let n = rng.gen_range(1..=cfg.max_objects.max(1));
            let mut bearings: Vec<f64> = Vec::new();
            let mut attempts = 0;
            while objects.len() < n && attempts < 100 {
                attempts += 1;
                let x = rng.gen_range(cfg.x_range[0]..cfg.x_range[1]);
                let y = rng.gen_range(cfg.y_range[0]..cfg.y_range[1]);
                let yaw = rng.gen_range(-180.0..180.0);
                let class = rng.gen_range(0..classes);
                let shape = sample_shape(class, &mut rng);
                let bearing = y.atan2(x).to_degrees();
                if bearings.iter().any(|b| (b - bearing).abs() < cfg.min_bearing_gap) {
                    continue;
                }
                bearings.push(bearing);
                let vertices = shape.reachable_vertices(cfg.vertices)?;
                objects.push(ObjectSpec { shape, pose: ground_pose(x, y, yaw), class: Some(class), vertices });
            }
        }
        scenes.push(SceneSpec { objects, seed: seed.wrapping_add(i as u64) });
    }
    Ok(scenes)
}

/// Render and label a synthetic dataset.
pub fn synth_dataset(cfg: &SynthConfig, classes: usize, seed: u64, env: &Environment) -> Result<Vec<LabeledScene>> {
    synth_scene_specs(cfg, classes, seed)?.iter().map(|s| s.labeled(env)).collect()
}
