use crate::geometry::{TriangleMesh, Vec3};

use super::{intersect, CloudPoint, HitRecord, PointCloud, RayBundle};

/// Intensity assigned to simulated object returns.
pub const DEFAULT_OBJECT_INTENSITY: f64 = 0.5;

/// A mesh composited onto a background scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SceneScan {
    /// Object returns, parallel to `hits`.
    pub foreground: PointCloud,
    pub hits: Vec<HitRecord>,
    /// Background points not blocked by the object, in original order.
    pub background_kept: PointCloud,
    /// Indices of background points removed by occlusion, ascending.
    pub occluded_indices: Vec<usize>,
}

impl SceneScan {
    /// Foreground followed by the kept background.
    pub fn merged(&self) -> PointCloud {
        let mut points = self.foreground.points.clone();
        points.extend_from_slice(&self.background_kept.points);
        PointCloud::new(points)
    }
}

/// Ray-cast `mesh` and composite it with `background` by depth testing: a
/// ray's object return replaces its background point when it is nearer.
pub fn render_scene(mesh: &TriangleMesh, background: &PointCloud, rays: &RayBundle, object_intensity: f64) -> SceneScan {
    let hits = intersect(rays, mesh);
    let mut occluded = vec![false; background.len()];
    let mut scan = SceneScan::default();
    for (i, hit) in hits.into_iter().enumerate() {
        let Some(hit) = hit else { continue };
        let bg = rays.background[i];
        let blocked = match bg {
            Some(b) => hit.t < (background.points[b].position - rays.origin).norm(),
            None => true,
        };
        if !blocked {
            continue;
        }
        if let Some(b) = bg {
            occluded[b] = true;
        }
        let p = rays.origin + rays.directions[i] * hit.t;
        scan.foreground.points.push(CloudPoint::new(p, object_intensity));
        scan.hits.push(hit);
    }
    for (i, p) in background.points.iter().enumerate() {
        if occluded[i] {
            scan.occluded_indices.push(i);
        } else {
            scan.background_kept.points.push(*p);
        }
    }
    scan
}

/// Adjoints of a hit point with respect to its face's three vertices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitGradient {
    pub vertices: [usize; 3],
    pub grads: [Vec3; 3],
    /// Set when the face is nearly parallel to the ray; gradients are zero then.
    pub degenerate: bool,
}

/// Back-propagate an adjoint on the hit point `p = o + t·r` to the face
/// vertices, holding the ray/face assignment fixed.
///
/// Moving vertex `k` by `δ` shifts the face plane at the hit by `b_k δ`, so
/// `∂t/∂v_k = b_k n / (r·n)` for face normal `n`.
pub fn hit_backward(hit: &HitRecord, mesh: &TriangleMesh, dir: Vec3, adjoint: Vec3) -> HitGradient {
    let f = mesh.faces()[hit.face];
    let v = mesh.vertices();
    let n = (v[f[1]] - v[f[0]]).cross(v[f[2]] - v[f[0]]);
    let zero = HitGradient { vertices: f, grads: [Vec3::ZERO; 3], degenerate: false };
    let Some(unit_n) = n.normalized() else {
        return HitGradient { degenerate: true, ..zero };
    };
    let denom = dir.dot(unit_n);
    if denom.abs() < 1e-9 {
        return HitGradient { degenerate: true, ..zero };
    }
    let dl_dt = adjoint.dot(dir);
    let g = unit_n * (dl_dt / denom);
    HitGradient {
        vertices: f,
        grads: [g * hit.bary[0], g * hit.bary[1], g * hit.bary[2]],
        degenerate: false,
    }
}
