//! Adversarial mesh synthesis against the simulated detector.
//!
//! Both attacks optimize a per-vertex displacement in the object frame; one
//! displacement is applied at every pose of the victim set. Success is always
//! judged on the hard pipeline.

mod artifact;
pub mod blackbox;
mod loss;
mod mask;
mod victim;
pub mod whitebox;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorParams;
use crate::error::{Error, Result};
use crate::features::GridSpec;
use crate::geometry::{Displacement, Pose, TriangleMesh};
use crate::lidar_sim::{PointCloud, RayBundle};

pub use artifact::write_run;
pub use blackbox::{evolve, fitness, EvolutionConfig};
pub use loss::{adv_loss, adv_loss_hide, adv_loss_relabel, footprint_overlaps, goal_success};
pub use mask::{build_mask, Mask};
pub use victim::{Victim, VictimView};
pub use whitebox::{
    bisect_lambda, controlled_poses, run, total_loss, AdamState, AttackConfig, LossEval, DEFAULT_BETA, DEFAULT_LAMBDA,
};

/// Everything fixed about the environment an attack runs in.
#[derive(Clone, Debug)]
pub struct AttackScene {
    pub background: PointCloud,
    pub rays: RayBundle,
    pub spec: GridSpec,
    pub params: DetectorParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttackGoal {
    /// No obstacle may overlap the object.
    Hide,
    /// The object must be reported as `target` instead of `source`.
    Relabel { source: usize, target: usize },
}

impl AttackGoal {
    pub fn validate(&self, classes: usize) -> Result<()> {
        match *self {
            AttackGoal::Hide => Ok(()),
            AttackGoal::Relabel { source, target } => {
                if source == target {
                    Err(Error::Config("relabel target must differ from source".into()))
                } else if source >= classes || target >= classes {
                    Err(Error::Config(format!("relabel classes must be below {classes}")))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Whitebox,
    Evolution,
}

#[derive(Clone, Debug, Serialize)]
pub struct AttackResult {
    pub method: Method,
    pub goal: AttackGoal,
    /// Adversarial mesh in the object frame; faces match the benign mesh.
    #[serde(skip)]
    pub mesh: TriangleMesh,
    #[serde(skip)]
    pub displacement: Displacement,
    /// Whitebox: proxy loss per iteration. Evolution: best hard loss per generation.
    pub loss_trace: Vec<f64>,
    pub poses: Vec<Pose>,
    /// Hard-pipeline success per pose of the victim set.
    pub success: Vec<bool>,
    pub success_count: usize,
    /// Hard-pipeline objective of the returned displacement.
    pub objective: f64,
    /// Its mean adversarial part.
    pub adversarial_loss: f64,
    pub iterations: usize,
    /// Hard-pipeline evaluations of a candidate displacement (per candidate, not per pose).
    pub queries: usize,
    pub best_iteration: usize,
    pub final_laplacian: f64,
    pub final_l2: f64,
    pub max_displacement: f64,
    /// Set when a successful result moved some vertex more than 20% of the object size.
    pub displacement_flag: bool,
    pub seed: u64,
}

impl AttackResult {
    pub fn success_rate(&self) -> f64 {
        self.success_count as f64 / self.success.len().max(1) as f64
    }

    pub fn fully_successful(&self) -> bool {
        self.success_count == self.success.len()
    }
}

/// Largest extent of the mesh's bounding box.
pub fn object_size(mesh: &TriangleMesh) -> f64 {
    let (lo, hi) = mesh.bounds();
    let d = hi - lo;
    d.x.max(d.y).max(d.z)
}
