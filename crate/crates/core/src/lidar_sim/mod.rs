//! LiDAR scan simulation: ray bundles, ray/mesh intersection with depth
//! testing, compositing onto a background cloud, and hit-point gradients.

mod bvh;
mod cloud;
mod rays;
mod render;

pub use bvh::{intersect, intersect_brute_force, Bvh, HitRecord};
pub use cloud::{CloudPoint, PointCloud};
pub use rays::{flat_ground_background, rays_from_background, rays_from_spec, RayBundle, SensorSpec};
pub use render::{hit_backward, render_scene, HitGradient, SceneScan, DEFAULT_OBJECT_INTENSITY};
