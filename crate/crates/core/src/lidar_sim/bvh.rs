//! Bounding-volume hierarchy over mesh faces and nearest-hit ray casting.

use rayon::prelude::*;

use crate::geometry::{TriangleMesh, Vec3};

use super::RayBundle;

/// Hits closer than this (meters) are ignored to avoid self-intersection at the sensor.
pub const MIN_HIT_DISTANCE: f64 = 1e-6;

const LEAF_SIZE: usize = 4;

/// Nearest intersection of one ray with a mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitRecord {
    pub ray: usize,
    pub face: usize,
    /// Distance along the unit ray direction.
    pub t: f64,
    /// Barycentric weights of the face vertices at the hit point.
    pub bary: [f64; 3],
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        let inf = f64::INFINITY;
        Aabb { lo: Vec3::new(inf, inf, inf), hi: Vec3::new(-inf, -inf, -inf) }
    }

    fn grow(&mut self, p: Vec3) {
        self.lo = self.lo.min(p);
        self.hi = self.hi.max(p);
    }

    fn union(&mut self, o: &Aabb) {
        self.lo = self.lo.min(o.lo);
        self.hi = self.hi.max(o.hi);
    }

    /// Entry distance of the ray into the box, if it intersects before `t_max`.
    fn entry(&self, origin: Vec3, inv_dir: Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let (lo, hi) = ((self.lo[a] - origin[a]) * inv_dir[a], (self.hi[a] - origin[a]) * inv_dir[a]);
            let (near, far) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            // NaN (0 * inf) means the ray lies in the slab plane; treat as unbounded.
            if !near.is_nan() {
                t0 = t0.max(near);
            }
            if !far.is_nan() {
                t1 = t1.min(far);
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

struct Node {
    bounds: Aabb,
    /// Leaf: first face in `order`; interior: index of the left child (right is `+1`).
    start: usize,
    /// Faces in a leaf; zero for interior nodes.
    count: usize,
}

/// Median-split bounding-volume hierarchy over the faces of one mesh.
pub struct Bvh<'m> {
    mesh: &'m TriangleMesh,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl<'m> Bvh<'m> {
    pub fn build(mesh: &'m TriangleMesh) -> Self {
        let v = mesh.vertices();
        let boxes: Vec<Aabb> = mesh
            .faces()
            .iter()
            .map(|f| {
                let mut b = Aabb::empty();
                for &i in f {
                    b.grow(v[i]);
                }
                b
            })
            .collect();
        let centers: Vec<Vec3> = boxes.iter().map(|b| (b.lo + b.hi) * 0.5).collect();
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        let mut nodes = vec![Node { bounds: Aabb::empty(), start: 0, count: 0 }];
        if !order.is_empty() {
            let len = order.len();
            build_node(&mut nodes, 0, &mut order, 0, len, &boxes, &centers);
        }
        Bvh { mesh, nodes, order }
    }

    /// Nearest hit along one ray; ties in `t` resolve to the lower face index.
    pub fn cast(&self, ray: usize, origin: Vec3, dir: Vec3) -> Option<HitRecord> {
        if self.order.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<HitRecord> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let t_max = best.map_or(f64::INFINITY, |h| h.t);
            if node.bounds.entry(origin, inv, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    if let Some((t, bary)) = intersect_face(self.mesh, f, origin, dir) {
                        if best.map_or(true, |b| t < b.t || (t == b.t && f < b.face)) {
                            best = Some(HitRecord { ray, face: f, t, bary });
                        }
                    }
                }
            } else {
                stack.push(node.start + 1);
                stack.push(node.start);
            }
        }
        best
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    idx: usize,
    order: &mut [usize],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    centers: &[Vec3],
) {
    let mut bounds = Aabb::empty();
    let mut cb = Aabb::empty();
    for &f in &order[start..end] {
        bounds.union(&boxes[f]);
        cb.grow(centers[f]);
    }
    nodes[idx].bounds = bounds;
    if end - start <= LEAF_SIZE {
        nodes[idx].start = start;
        nodes[idx].count = end - start;
        return;
    }
    let ext = cb.hi - cb.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].sort_by(|&a, &b| centers[a][axis].total_cmp(&centers[b][axis]).then(a.cmp(&b)));
    let left = nodes.len();
    nodes.push(Node { bounds: Aabb::empty(), start: 0, count: 0 });
    nodes.push(Node { bounds: Aabb::empty(), start: 0, count: 0 });
    nodes[idx].start = left;
    nodes[idx].count = 0;
    build_node(nodes, left, order, start, mid, boxes, centers);
    build_node(nodes, left + 1, order, mid, end, boxes, centers);
}

/// Möller–Trumbore intersection returning `(t, barycentrics)`.
fn intersect_face(mesh: &TriangleMesh, face: usize, origin: Vec3, dir: Vec3) -> Option<(f64, [f64; 3])> {
    let f = mesh.faces()[face];
    let v = mesh.vertices();
    let (v0, v1, v2) = (v[f[0]], v[f[1]], v[f[2]]);
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let b1 = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&b1) {
        return None;
    }
    let q = s.cross(e1);
    let b2 = dir.dot(q) * inv;
    if b2 < 0.0 || b1 + b2 > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > MIN_HIT_DISTANCE).then_some((t, [1.0 - b1 - b2, b1, b2]))
}

/// Nearest hit for every ray, using the hierarchy. Results are merged by ray
/// index, so the output does not depend on thread count.
pub fn intersect(rays: &RayBundle, mesh: &TriangleMesh) -> Vec<Option<HitRecord>> {
    let bvh = Bvh::build(mesh);
    rays.directions
        .par_iter()
        .enumerate()
        .map(|(i, d)| bvh.cast(i, rays.origin, *d))
        .collect()
}

/// Reference implementation testing every face against every ray.
pub fn intersect_brute_force(rays: &RayBundle, mesh: &TriangleMesh) -> Vec<Option<HitRecord>> {
    rays.directions
        .iter()
        .enumerate()
        .map(|(ray, d)| {
            let mut best: Option<HitRecord> = None;
            for face in 0..mesh.faces().len() {
                if let Some((t, bary)) = intersect_face(mesh, face, rays.origin, *d) {
                    if best.map_or(true, |b| t < b.t || (t == b.t && face < b.face)) {
                        best = Some(HitRecord { ray, face, t, bary });
                    }
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_primitive, Pose, PrimitiveKind};
    use crate::lidar_sim::SensorSpec;

    fn single_ray(d: Vec3) -> RayBundle {
        RayBundle { origin: Vec3::ZERO, directions: vec![d], background: vec![None] }
    }

    fn plane_x(x: f64) -> [Vec3; 3] {
        [Vec3::new(x, -1.0, -1.0), Vec3::new(x, 1.0, -1.0), Vec3::new(x, 0.0, 1.0)]
    }

    #[test]
    fn hits_plane_at_five() {
        let m = TriangleMesh::new(plane_x(5.0).to_vec(), vec![[0, 1, 2]]).unwrap();
        let h = intersect(&single_ray(Vec3::new(1.0, 0.0, 0.0)), &m)[0].unwrap();
        assert!((h.t - 5.0).abs() < 1e-12);
        assert!((h.bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(intersect(&single_ray(Vec3::new(-1.0, 0.0, 0.0)), &m)[0].is_none());
    }

    #[test]
    fn depth_test_picks_nearest() {
        let mut v = plane_x(8.0).to_vec();
        v.extend(plane_x(5.0));
        let m = TriangleMesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let h = intersect(&single_ray(Vec3::new(1.0, 0.0, 0.0)), &m)[0].unwrap();
        assert_eq!(h.face, 1);
        assert!((h.t - 5.0).abs() < 1e-12);
    }

    #[test]
    fn hierarchy_matches_brute_force() {
        let rays = SensorSpec::default().rays().unwrap();
        for (kind, n) in [(PrimitiveKind::Sphere, 642), (PrimitiveKind::Cube, 98), (PrimitiveKind::Cylinder, 200)] {
            let m = make_primitive(kind, 0.6, n)
                .unwrap()
                .apply_pose(&Pose::new(Vec3::new(6.0, 0.7, 0.0), 20.0));
            let a = intersect(&rays, &m);
            let b = intersect_brute_force(&rays, &m);
            assert!(a.iter().flatten().count() > 5);
            assert_eq!(a, b);
        }
    }
}
