use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{AttackConfig, AttackGoal, EvolutionConfig};
use crate::detector::TrainConfig;
use crate::error::{Error, Result};

use super::{EnvironmentConfig, EvalGridConfig, SceneSpec, SynthConfig};

/// Full configuration of a command-line run. Every section has defaults;
/// the top-level `seed` overrides the seeds of all sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub environment: EnvironmentConfig,
    /// Objects for `render` and `detect`.
    pub scene: SceneSpec,
    pub synth: SynthConfig,
    /// Held-out scenes scored after training.
    pub holdout: usize,
    /// Scene layouts written by `synth`; synthesized on the fly when unset.
    pub dataset: Option<PathBuf>,
    pub train: TrainConfig,
    pub weights: Option<PathBuf>,
    /// Object-frame mesh to attack, evaluate or export; the benign cube when unset.
    pub mesh: Option<PathBuf>,
    pub cube_vertices: usize,
    pub goal: AttackGoal,
    pub attack: AttackConfig,
    pub evolution: EvolutionConfig,
    pub eval: EvalGridConfig,
    /// Output file name of `export`, relative to the output directory unless absolute.
    pub stl: Option<PathBuf>,
    /// Point-cloud file name written by `render` (`.csv` for text).
    pub cloud_file: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            environment: EnvironmentConfig::default(),
            scene: SceneSpec::default(),
            synth: SynthConfig::default(),
            holdout: 50,
            dataset: None,
            train: TrainConfig::default(),
            weights: None,
            mesh: None,
            cube_vertices: 386,
            goal: AttackGoal::Hide,
            attack: AttackConfig::default(),
            evolution: EvolutionConfig::default(),
            eval: EvalGridConfig::default(),
            stl: None,
            cloud_file: "cloud.bin".into(),
        }
    }
}

impl RunConfig {
    /// Read a config file. A run manifest is accepted too; its `config` is used.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("command").is_some() {
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Push the top-level seed into every section.
    pub fn apply_seed(&mut self) {
        self.scene.seed = self.seed;
        self.train.seed = self.seed;
        self.attack.seed = self.seed;
        self.evolution.seed = self.seed;
        self.eval.seed = self.seed;
    }
}
