//! Simulated LiDAR obstacle detection and adversarial mesh synthesis.
//!
//! The pipeline mirrors a production LiDAR perception stack at desk scale:
//! ray-cast scan of a mesh composited onto a background cloud
//! ([`lidar_sim`]), bird's-eye-view feature aggregation ([`features`]), a
//! small per-cell convolutional detector ([`detector`]) and clustering into
//! obstacles ([`postprocess`]). On top of it sit a gradient-based attack that
//! differentiates through proxy aggregation functions ([`attack::whitebox`])
//! and an evolution-strategy attack that only queries the hard pipeline
//! ([`attack::blackbox`]).

pub mod attack;
pub mod detector;
pub mod error;
pub mod features;
pub mod geometry;
pub mod lidar_sim;
pub mod postprocess;
pub mod workbench;

pub use error::{Error, Result};
