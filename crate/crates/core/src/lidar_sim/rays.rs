use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

use super::{CloudPoint, PointCloud};

/// A set of laser directions cast from one sensor center.
#[derive(Clone, Debug, PartialEq)]
pub struct RayBundle {
    pub origin: Vec3,
    /// Unit directions.
    pub directions: Vec<Vec3>,
    /// For each ray, the index of the background point it observes, if any.
    pub background: Vec<Option<usize>>,
}

impl RayBundle {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// Scan-pattern description of a spinning multi-beam sensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorSpec {
    pub azimuth_count: usize,
    pub elevation_count: usize,
    /// Degrees.
    pub elevation_min: f64,
    /// Degrees.
    pub elevation_max: f64,
    pub origin: Vec3,
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec {
            azimuth_count: 512,
            elevation_count: 32,
            elevation_min: -25.0,
            elevation_max: 5.0,
            origin: Vec3::new(0.0, 0.0, 1.8),
        }
    }
}

impl SensorSpec {
    pub fn elevations(&self) -> Vec<f64> {
        match self.elevation_count {
            0 => Vec::new(),
            1 => vec![self.elevation_min],
            n => (0..n)
                .map(|i| self.elevation_min + (self.elevation_max - self.elevation_min) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    pub fn rays(&self) -> Result<RayBundle> {
        rays_from_spec(self.azimuth_count, &self.elevations(), self.origin)
    }
}

/// One ray per (elevation, azimuth) pair with uniform azimuth spacing,
/// elevation-major order.
pub fn rays_from_spec(azimuth_count: usize, elevations_deg: &[f64], origin: Vec3) -> Result<RayBundle> {
    if azimuth_count == 0 {
        return Err(Error::InvalidArgument("azimuth_count must be at least 1".into()));
    }
    if let Some(e) = elevations_deg.iter().find(|e| !(e.abs() < 90.0)) {
        return Err(Error::InvalidArgument(format!("elevation {e}° outside (-90°, 90°)")));
    }
    let mut directions = Vec::with_capacity(azimuth_count * elevations_deg.len());
    for &e in elevations_deg {
        let (se, ce) = e.to_radians().sin_cos();
        for k in 0..azimuth_count {
            let a = std::f64::consts::TAU * k as f64 / azimuth_count as f64;
            let (sa, ca) = a.sin_cos();
            let d = Vec3::new(ce * ca, ce * sa, se);
            directions.push(d / d.norm());
        }
    }
    let n = directions.len();
    Ok(RayBundle { origin, directions, background: vec![None; n] })
}

/// One ray toward every background point, so the object is probed with the
/// exact beam pattern of a captured scan.
pub fn rays_from_background(cloud: &PointCloud, origin: Vec3) -> Result<RayBundle> {
    let directions = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (p.position - origin)
                .normalized()
                .ok_or_else(|| Error::InvalidInput(format!("background point {i} coincides with the sensor origin")))
        })
        .collect::<Result<Vec<_>>>()?;
    let background = (0..directions.len()).map(Some).collect();
    Ok(RayBundle { origin, directions, background })
}

/// Synthesize a flat ground plane `z = ground_z` as seen by `rays`: every
/// downward ray within `max_range` yields a background point, and the returned
/// bundle records that correspondence.
pub fn flat_ground_background(rays: &RayBundle, ground_z: f64, max_range: f64, intensity: f64) -> (PointCloud, RayBundle) {
    let mut points = Vec::new();
    let mut background = Vec::with_capacity(rays.len());
    for d in &rays.directions {
        let hit = (d.z < 0.0)
            .then(|| (ground_z - rays.origin.z) / d.z)
            .filter(|&t| t > 0.0 && t <= max_range);
        match hit {
            Some(t) => {
                background.push(Some(points.len()));
                let mut p = rays.origin + *d * t;
                p.z = ground_z;
                points.push(CloudPoint::new(p, intensity));
            }
            None => background.push(None),
        }
    }
    let bundle = RayBundle { origin: rays.origin, directions: rays.directions.clone(), background };
    (PointCloud::new(points), bundle)
}
