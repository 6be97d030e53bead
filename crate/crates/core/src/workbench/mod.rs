//! Scene generation, datasets, evaluation grids and the command-line driver.

pub mod cli;
mod config;
mod dataset;
mod eval;
mod scene;

pub use config::RunConfig;
pub use dataset::{synth_dataset, synth_scene_specs, SynthConfig};
pub use eval::{scene_poses, evaluate, success_at, EvalGrid, EvalGridConfig, EvalReport, SuccessTally, UnseenBand};
pub use scene::{
    benign_cube, footprint_cells, ground_pose, offset_target, BackgroundSpec, Environment, EnvironmentConfig, GroundSpec,
    ObjectSpec, RayMode, SceneSpec, Shape,
};
