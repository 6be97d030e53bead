use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{build_mask, goal_success, AttackGoal, AttackScene, Victim};
use crate::error::Result;
use crate::geometry::{Pose, TriangleMesh, Vec3};

/// Random pose offsets around a center: distance uniform in
/// `distance` (meters, random bearing) and yaw magnitude uniform in `yaw`
/// (degrees, random sign).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnseenBand {
    pub name: String,
    pub distance: [f64; 2],
    pub yaw: [f64; 2],
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalGridConfig {
    pub center: Pose,
    pub position_offsets: Vec<f64>,
    pub yaw_offsets: Vec<f64>,
    pub bands: Vec<UnseenBand>,
    pub seed: u64,
}

impl Default for EvalGridConfig {
    fn default() -> Self {
        let band = |name: &str, distance: [f64; 2], yaw: [f64; 2], count| UnseenBand { name: name.into(), distance, yaw, count };
        EvalGridConfig {
            center: Pose::new(Vec3::new(8.0, 0.0, 0.0), 0.0),
            position_offsets: vec![0.0, -0.5, 0.5],
            yaw_offsets: vec![0.0, -2.5, 2.5, -5.0, 5.0],
            bands: vec![
                band("distance 0-0.5 m", [0.0, 0.5], [0.0, 0.0], 100),
                band("distance 0.5-1.0 m", [0.5, 1.0], [0.0, 0.0], 100),
                band("yaw 0-5 deg", [0.0, 0.0], [0.0, 5.0], 10),
                band("yaw 0-10 deg", [0.0, 0.0], [0.0, 10.0], 10),
            ],
            seed: 0,
        }
    }
}

/// Controlled poses and sampled unseen poses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub controlled: Vec<Pose>,
    /// `(band name, poses)`.
    pub unseen: Vec<(String, Vec<Pose>)>,
}

impl EvalGrid {
    pub fn build(cfg: &EvalGridConfig) -> EvalGrid {
        let mut controlled = Vec::new();
        for &dx in &cfg.position_offsets {
            for &dy in &cfg.position_offsets {
                for &dyaw in &cfg.yaw_offsets {
                    controlled.push(cfg.center.offset(Vec3::new(dx, dy, 0.0), dyaw));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let unseen = cfg
            .bands
            .iter()
            .map(|band| {
                let mut poses = Vec::with_capacity(band.count);
                while poses.len() < band.count {
                    let d = sample(&mut rng, band.distance);
                    let bearing = rng.gen_range(0.0..std::f64::consts::TAU);
                    let yaw = sample(&mut rng, band.yaw) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let pose = cfg.center.offset(Vec3::new(d * bearing.cos(), d * bearing.sin(), 0.0), yaw);
                    if !controlled.contains(&pose) {
                        poses.push(pose);
                    }
                }
                (band.name.clone(), poses)
            })
            .collect();
        EvalGrid { controlled, unseen }
    }
}

/// Seeded attack scenes: poses uniform within `±position` meters in x and y
/// and `±yaw` degrees around `center`.
pub fn scene_poses(center: Pose, position: f64, yaw: f64, count: usize, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let dx = sample(&mut rng, [-position, position]);
            let dy = sample(&mut rng, [-position, position]);
            let dyaw = sample(&mut rng, [-yaw, yaw]);
            center.offset(Vec3::new(dx, dy, 0.0), dyaw)
        })
        .collect()
}

fn sample(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..range[1])
    } else {
        range[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessTally {
    pub name: String,
    pub successes: usize,
    pub total: usize,
    pub rate: f64,
    pub per_pose: Vec<bool>,
}

impl SuccessTally {
    fn new(name: &str, per_pose: Vec<bool>) -> Self {
        let successes = per_pose.iter().filter(|s| **s).count();
        let total = per_pose.len();
        SuccessTally { name: name.into(), successes, total, rate: successes as f64 / total.max(1) as f64, per_pose }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub goal: AttackGoal,
    pub controlled: SuccessTally,
    pub unseen: Vec<SuccessTally>,
}

/// Hard-pipeline success of an object-frame mesh at the given poses.
pub fn success_at(mesh: &TriangleMesh, poses: &[Pose], goal: &AttackGoal, scene: &AttackScene) -> Result<Vec<bool>> {
    let victim = Victim::new(scene)?;
    poses
        .par_iter()
        .map(|pose| {
            let mask = build_mask(mesh, pose, &scene.spec)?;
            let view = victim.evaluate(Some(&mesh.place(pose)))?;
            Ok(goal_success(&view.obstacles, &mask, &scene.spec, goal))
        })
        .collect()
}

/// Success table over the controlled poses and every unseen band.
pub fn evaluate(mesh: &TriangleMesh, grid: &EvalGrid, goal: &AttackGoal, scene: &AttackScene) -> Result<EvalReport> {
    let controlled = SuccessTally::new("controlled", success_at(mesh, &grid.controlled, goal, scene)?);
    let unseen = grid
        .unseen
        .iter()
        .map(|(name, poses)| Ok(SuccessTally::new(name, success_at(mesh, poses, goal, scene)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { goal: *goal, controlled, unseen })
}
