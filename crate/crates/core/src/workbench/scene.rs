use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attack::AttackScene;
use crate::detector::{CellTarget, DetectorParams, LabeledScene};
use crate::error::{Error, Result};
use crate::features::{hard_features, roi_filter, GridSpec, Region};
use crate::geometry::{make_box, make_cylinder, make_primitive, Pose, PrimitiveKind, TriangleMesh, Vec3};
use crate::lidar_sim::{
    flat_ground_background, rays_from_background, render_scene, PointCloud, RayBundle, SensorSpec,
    DEFAULT_OBJECT_INTENSITY,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackgroundSpec {
    /// The plane `z = ground.z` sampled by the sensor rays.
    FlatGround,
    /// A recorded cloud (CSV or binary point-cloud file).
    CapturedFile { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RayMode {
    /// Rays from the sensor scan pattern.
    Spec,
    /// One ray through each background point.
    FromBackground,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundSpec {
    pub z: f64,
    /// Ground returns farther than this are dropped.
    pub max_range: f64,
    pub intensity: f64,
}

impl Default for GroundSpec {
    fn default() -> Self {
        GroundSpec { z: 0.0, max_range: 100.0, intensity: 0.5 }
    }
}

/// Sensor, grid and background shared by every scene of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub grid: GridSpec,
    pub sensor: SensorSpec,
    pub ground: GroundSpec,
    pub background: BackgroundSpec,
    pub ray_mode: RayMode,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig {
            grid: GridSpec::default(),
            sensor: SensorSpec::default(),
            ground: GroundSpec::default(),
            background: BackgroundSpec::FlatGround,
            ray_mode: RayMode::Spec,
        }
    }
}

/// Background cloud with the rays that observe it.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub spec: GridSpec,
    pub background: PointCloud,
    pub rays: RayBundle,
}

impl Environment {
    pub fn build(cfg: &EnvironmentConfig) -> Result<Self> {
        cfg.grid.validate()?;
        let (background, rays) = match (&cfg.background, cfg.ray_mode) {
            (BackgroundSpec::FlatGround, RayMode::Spec) => {
                flat_ground_background(&cfg.sensor.rays()?, cfg.ground.z, cfg.ground.max_range, cfg.ground.intensity)
            }
            (BackgroundSpec::FlatGround, RayMode::FromBackground) => {
                return Err(Error::Config("ray_mode from-background needs a captured background".into()))
            }
            (BackgroundSpec::CapturedFile { path }, mode) => {
                let cloud = PointCloud::read(path)?;
                let rays = match mode {
                    RayMode::FromBackground => rays_from_background(&cloud, cfg.sensor.origin)?,
                    RayMode::Spec => {
                        let mut rays = cfg.sensor.rays()?;
                        rays.background = vec![None; rays.len()];
                        rays
                    }
                };
                (cloud, rays)
            }
        };
        Ok(Environment { spec: cfg.grid.clone(), background, rays })
    }

    pub fn attack_scene(&self, params: DetectorParams) -> AttackScene {
        AttackScene { background: self.background.clone(), rays: self.rays.clone(), spec: self.spec.clone(), params }
    }

    /// Scan with `mesh` (world frame) composited onto the background.
    pub fn scan(&self, mesh: Option<&TriangleMesh>) -> PointCloud {
        match mesh {
            Some(m) => render_scene(m, &self.background, &self.rays, DEFAULT_OBJECT_INTENSITY).merged(),
            None => self.background.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    /// Cube, sphere, tetrahedron or squat cylinder of one size.
    Primitive { kind: PrimitiveKind, size: f64 },
    Box { lx: f64, ly: f64, lz: f64 },
    Cylinder { diameter: f64, height: f64 },
}

impl Shape {
    pub fn mesh(&self, vertices: usize) -> Result<TriangleMesh> {
        match *self {
            Shape::Primitive { kind, size } => make_primitive(kind, size, vertices),
            Shape::Box { lx, ly, lz } => make_box(lx, ly, lz, vertices),
            Shape::Cylinder { diameter, height } => make_cylinder(diameter, height, vertices),
        }
    }

    /// The reachable vertex count closest to `target` (searching outward,
    /// smaller first).
    pub fn reachable_vertices(&self, target: usize) -> Result<usize> {
        for k in 0..=target {
            for n in [target.saturating_sub(k), target + k] {
                if n >= 4 && self.mesh(n).is_ok() {
                    return Ok(n);
                }
            }
        }
        Err(Error::InvalidArgument(format!("no reachable vertex count near {target} for {self:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    #[serde(flatten)]
    pub shape: Shape,
    pub pose: Pose,
    /// Training label; `None` objects are rendered but not labeled.
    #[serde(default)]
    pub class: Option<usize>,
    #[serde(default = "default_vertices")]
    pub vertices: usize,
}

fn default_vertices() -> usize {
    150
}

impl ObjectSpec {
    /// World-frame mesh.
    pub fn posed_mesh(&self) -> Result<TriangleMesh> {
        Ok(self.shape.mesh(self.vertices)?.place(&self.pose))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        for o in &self.objects {
            let p = o.pose.translation;
            if !spec.roi.contains(p.x, p.y) {
                return Err(Error::Config(format!("object at ({}, {}) is outside the ROI", p.x, p.y)));
            }
        }
        Ok(())
    }

    /// All objects merged into one world-frame mesh, or `None` for an empty scene.
    pub fn mesh(&self) -> Result<Option<TriangleMesh>> {
        if self.objects.is_empty() {
            return Ok(None);
        }
        let parts = self.objects.iter().map(|o| o.posed_mesh()).collect::<Result<Vec<_>>>()?;
        Ok(Some(TriangleMesh::merge(&parts).0))
    }

    pub fn render(&self, env: &Environment) -> Result<PointCloud> {
        Ok(env.scan(self.mesh()?.as_ref()))
    }

    /// Hard features with per-cell targets from the object footprints.
    pub fn labeled(&self, env: &Environment) -> Result<LabeledScene> {
        let spec = &env.spec;
        let cloud = self.render(env)?;
        let features = hard_features(&roi_filter(&cloud, spec), spec);
        let mut targets = vec![CellTarget::default(); spec.cells()];
        let mut objects = Vec::new();
        for o in &self.objects {
            let Some(class) = o.class else { continue };
            let mesh = o.posed_mesh()?;
            let (_, hi) = mesh.bounds();
            let cells = footprint_cells(&mesh, spec);
            let Some(block) = bounding_block(&cells) else { continue };
            let t = o.pose.translation;
            let (u, v) = spec.grid_coords(t.x, t.y);
            for &(r, c) in &cells {
                targets[r * spec.cols + c] = CellTarget {
                    objectness: 1.0,
                    offset: offset_target(u - r as f64 - 0.5, v - c as f64 - 0.5),
                    height: hi.z,
                    class: Some(class),
                };
            }
            objects.push(block);
        }
        Ok(LabeledScene { features, targets, objects })
    }
}

/// Offset target for a cell whose center is `(du, dv)` cells away from the
/// object centroid.
///
/// Each cell points one step toward the centroid: the detector sees only 5x5
/// cells, too little to locate the centre of a larger footprint but enough to
/// know which way it lies. The gain of 2 makes cells straddling the centroid
/// point at each other. Next to the centroid only one axis is kept, chosen by
/// quadrant, so the four cells around a lattice corner form one cycle instead
/// of two diagonal pairs.
pub fn offset_target(du: f64, dv: f64) -> (f64, f64) {
    let step = |d: f64| (2.0 * d).clamp(-1.0, 1.0);
    let (tr, tc) = (step(du), step(dv));
    let central = du.abs() < 1.0 && dv.abs() < 1.0 && tr.abs() >= 0.5 && tc.abs() >= 0.5;
    match (central, (du > 0.0) == (dv > 0.0)) {
        (false, _) => (tr, tc),
        (true, true) => (tr, 0.0),
        (true, false) => (0.0, tc),
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Cells touching the convex hull of the mesh's ground projection, so every
/// point on the object lands in one of them.
pub fn footprint_cells(mesh: &TriangleMesh, spec: &GridSpec) -> Vec<(usize, usize)> {
    let mut pts: Vec<(f64, f64)> = mesh.vertices().iter().map(|v| (v.x, v.y)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let seq: Vec<(f64, f64)> = if pass == 0 { pts.clone() } else { pts.iter().rev().copied().collect() };
        for q in seq {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    const TOL: f64 = 1e-6;
    let (lo, hi) = mesh.bounds();
    let half = spec.cell_size / 2.0;
    let project = |pts: &mut dyn Iterator<Item = (f64, f64)>, axis: (f64, f64)| {
        pts.map(|p| p.0 * axis.0 + p.1 * axis.1).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
    };
    let mut cells = Vec::new();
    if let Some(block) = spec.cells_covering(lo.x - TOL, hi.x + TOL, lo.y - TOL, hi.y + TOL) {
        for (r, c) in block.cells() {
            let m = spec.cell_center(r, c);
            let corners = [(m.0 - half, m.1 - half), (m.0 + half, m.1 - half), (m.0 + half, m.1 + half), (m.0 - half, m.1 + half)];
            let mut axes = vec![(1.0, 0.0), (0.0, 1.0)];
            for i in 0..hull.len() {
                let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
                axes.push((a.1 - b.1, b.0 - a.0));
            }
            let touching = axes.iter().all(|&axis| {
                let norm = axis.0.hypot(axis.1);
                if norm == 0.0 {
                    return true;
                }
                let axis = (axis.0 / norm, axis.1 / norm);
                let (h0, h1) = project(&mut hull.iter().copied(), axis);
                let (c0, c1) = project(&mut corners.iter().copied(), axis);
                h0 <= c1 + TOL && c0 <= h1 + TOL
            });
            if touching && !hull.is_empty() {
                cells.push((r, c));
            }
        }
    }
    cells
}

fn bounding_block(cells: &[(usize, usize)]) -> Option<Region> {
    let first = cells.first()?;
    let mut g = Region { r0: first.0, r1: first.0 + 1, c0: first.1, c1: first.1 + 1 };
    for &(r, c) in cells {
        g = Region { r0: g.r0.min(r), r1: g.r1.max(r + 1), c0: g.c0.min(c), c1: g.c1.max(c + 1) };
    }
    Some(g)
}

/// The reference benign object: a 0.5 m cube.
pub fn benign_cube(vertices: usize) -> Result<TriangleMesh> {
    make_primitive(PrimitiveKind::Cube, 0.5, vertices)
}

/// Object placed in front of the sensor at `(x, y)` with yaw in degrees.
pub fn ground_pose(x: f64, y: f64, yaw: f64) -> Pose {
    Pose::new(Vec3::new(x, y, 0.0), yaw)
}
