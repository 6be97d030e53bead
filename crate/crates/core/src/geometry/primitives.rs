use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{TriangleMesh, Vec3};

/// Closed primitive shapes used as benign objects and training data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Cube,
    Sphere,
    Tetrahedron,
    Cylinder,
}

impl std::str::FromStr for PrimitiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cube" => Ok(PrimitiveKind::Cube),
            "sphere" => Ok(PrimitiveKind::Sphere),
            "tetrahedron" => Ok(PrimitiveKind::Tetrahedron),
            "cylinder" => Ok(PrimitiveKind::Cylinder),
            other => Err(Error::InvalidArgument(format!("unknown primitive kind '{other}'"))),
        }
    }
}

/// Allowed relative deviation from the requested vertex count.
const COUNT_TOLERANCE: f64 = 0.10;

/// Build a closed primitive centered on the vertical axis and resting on z = 0.
///
/// `size` is the edge length (cube, tetrahedron) or diameter (sphere,
/// cylinder; the cylinder is as tall as it is wide).
pub fn make_primitive(kind: PrimitiveKind, size: f64, target_vertex_count: usize) -> Result<TriangleMesh> {
    check_size(size)?;
    match kind {
        PrimitiveKind::Cube => make_box(size, size, size, target_vertex_count),
        PrimitiveKind::Cylinder => make_cylinder(size, size, target_vertex_count),
        PrimitiveKind::Sphere => make_sphere(size, target_vertex_count),
        PrimitiveKind::Tetrahedron => make_tetrahedron(size, target_vertex_count),
    }
}

fn check_size(size: f64) -> Result<()> {
    if size > 0.0 && size.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("primitive size must be positive, got {size}")))
    }
}

fn check_count(kind: &str, target: usize, got: usize) -> Result<()> {
    if target < 4 {
        return Err(Error::InvalidArgument(format!(
            "unreachable vertex count {target} for {kind} (minimum 4)"
        )));
    }
    let rel = (got as f64 - target as f64).abs() / target as f64;
    if rel > COUNT_TOLERANCE + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "unreachable vertex count {target} for {kind}: closest uniform resampling has {got}"
        )));
    }
    Ok(())
}

/// Merges coincident vertices so faces generated patch by patch share seams.
struct Welder {
    index: HashMap<[i64; 3], usize>,
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl Welder {
    fn new() -> Self {
        Welder { index: HashMap::new(), vertices: Vec::new(), faces: Vec::new() }
    }

    fn vertex(&mut self, p: Vec3) -> usize {
        let key = [
            (p.x * 1e9).round() as i64,
            (p.y * 1e9).round() as i64,
            (p.z * 1e9).round() as i64,
        ];
        let next = self.vertices.len();
        *self.index.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            next
        })
    }

    fn tri(&mut self, a: Vec3, b: Vec3, c: Vec3) {
        let f = [self.vertex(a), self.vertex(b), self.vertex(c)];
        self.faces.push(f);
    }

    fn quad(&mut self, p00: Vec3, p10: Vec3, p11: Vec3, p01: Vec3) {
        self.tri(p00, p10, p11);
        self.tri(p00, p11, p01);
    }

    fn finish(self) -> Result<TriangleMesh> {
        TriangleMesh::new(self.vertices, self.faces)
    }
}

fn box_vertex_count(a: usize, b: usize, c: usize) -> usize {
    2 * (a * b + b * c + c * a) + 2
}

/// Axis-aligned box with extents `(lx, ly, lz)`, centered on the z axis with
/// its base on z = 0, each face subdivided into a near-uniform quad grid.
pub fn make_box(lx: f64, ly: f64, lz: f64, target_vertex_count: usize) -> Result<TriangleMesh> {
    for s in [lx, ly, lz] {
        check_size(s)?;
    }
    let dims = [lx, ly, lz];
    // Near-uniform resampling: segment lengths within a factor of two.
    let mut best: Option<((usize, usize, usize), usize, f64)> = None;
    for a in 1..=64usize {
        for b in 1..=64usize {
            for c in 1..=64usize {
                let seg = [lx / a as f64, ly / b as f64, lz / c as f64];
                let (lo, hi) = seg.iter().fold((f64::MAX, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
                let aspect = hi / lo;
                if aspect > 2.0 {
                    continue;
                }
                let n = box_vertex_count(a, b, c);
                let err = (n as f64 - target_vertex_count as f64).abs();
                let better = match best {
                    None => true,
                    Some((_, bn, basp)) => {
                        let berr = (bn as f64 - target_vertex_count as f64).abs();
                        err < berr || (err == berr && aspect < basp)
                    }
                };
                if better {
                    best = Some(((a, b, c), n, aspect));
                }
            }
        }
    }
    let ((a, b, c), n, _) = best.expect("search space nonempty");
    check_count("box", target_vertex_count, n)?;

    let segs = [a, b, c];
    let lo = Vec3::new(-lx / 2.0, -ly / 2.0, 0.0);
    let point = |idx: [usize; 3]| -> Vec3 {
        Vec3::new(
            lo.x + dims[0] * idx[0] as f64 / segs[0] as f64,
            lo.y + dims[1] * idx[1] as f64 / segs[1] as f64,
            lo.z + dims[2] * idx[2] as f64 / segs[2] as f64,
        )
    };
    let mut w = Welder::new();
    // (fixed axis, at max side?, u axis, v axis) with u × v pointing outward.
    let sides = [(0, true, 1, 2), (0, false, 2, 1), (1, true, 2, 0), (1, false, 0, 2), (2, true, 0, 1), (2, false, 1, 0)];
    for (axis, at_max, ua, va) in sides {
        for i in 0..segs[ua] {
            for j in 0..segs[va] {
                let corner = |di: usize, dj: usize| {
                    let mut idx = [0usize; 3];
                    idx[axis] = if at_max { segs[axis] } else { 0 };
                    idx[ua] = i + di;
                    idx[va] = j + dj;
                    point(idx)
                };
                w.quad(corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1));
            }
        }
    }
    w.finish()
}

fn cylinder_layout(diameter: f64, height: f64, slices: usize) -> (usize, usize) {
    let arc = PI * diameter / slices as f64;
    let stacks = ((height / arc).round() as usize).max(1);
    let rings = ((diameter / 2.0 / arc).round() as usize).max(1);
    (stacks, rings)
}

/// Upright cylinder with the given diameter and height; side and caps are
/// gridded with roughly square cells.
pub fn make_cylinder(diameter: f64, height: f64, target_vertex_count: usize) -> Result<TriangleMesh> {
    check_size(diameter)?;
    check_size(height)?;
    let count = |n: usize| {
        let (s, r) = cylinder_layout(diameter, height, n);
        // side rings + interior cap rings + two cap centers
        n * (s + 1) + 2 * n * (r - 1) + 2
    };
    let slices = (3..=256usize)
        .min_by_key(|&n| (count(n) as i64 - target_vertex_count as i64).abs())
        .expect("nonempty range");
    check_count("cylinder", target_vertex_count, count(slices))?;
    let (stacks, rings) = cylinder_layout(diameter, height, slices);
    let radius = diameter / 2.0;
    let at = |k: usize, r: f64, z: f64| {
        let th = 2.0 * PI * (k % slices) as f64 / slices as f64;
        Vec3::new(r * th.cos(), r * th.sin(), z)
    };
    let mut w = Welder::new();
    for s in 0..stacks {
        let z0 = height * s as f64 / stacks as f64;
        let z1 = height * (s + 1) as f64 / stacks as f64;
        for k in 0..slices {
            w.quad(at(k, radius, z0), at(k + 1, radius, z0), at(k + 1, radius, z1), at(k, radius, z1));
        }
    }
    for (z, up) in [(height, true), (0.0, false)] {
        let center = Vec3::new(0.0, 0.0, z);
        for ring in 0..rings {
            let r_in = radius * ring as f64 / rings as f64;
            let r_out = radius * (ring + 1) as f64 / rings as f64;
            for k in 0..slices {
                let (a, b) = (at(k, r_out, z), at(k + 1, r_out, z));
                if ring == 0 {
                    if up {
                        w.tri(center, a, b);
                    } else {
                        w.tri(center, b, a);
                    }
                } else {
                    let (c, d) = (at(k + 1, r_in, z), at(k, r_in, z));
                    if up {
                        w.quad(d, a, b, c);
                    } else {
                        w.quad(d, c, b, a);
                    }
                }
            }
        }
    }
    w.finish()
}

fn icosphere_count(level: u32) -> usize {
    10 * 4usize.pow(level) + 2
}

fn make_sphere(diameter: f64, target: usize) -> Result<TriangleMesh> {
    let r = diameter / 2.0;
    let center = Vec3::new(0.0, 0.0, r);
    let ico = (0..6u32)
        .min_by_key(|&l| (icosphere_count(l) as i64 - target as i64).abs())
        .expect("nonempty");
    let ico_err = (icosphere_count(ico) as i64 - target as i64).abs();
    // UV sphere with slices between one and three times the stack count.
    let mut uv: Option<(usize, usize, i64)> = None;
    for stacks in 2..=128usize {
        for slices in stacks.max(3)..=(3 * stacks) {
            let n = (stacks - 1) * slices + 2;
            let err = (n as i64 - target as i64).abs();
            if uv.map_or(true, |(_, _, e)| err < e) {
                uv = Some((stacks, slices, err));
            }
        }
    }
    let (stacks, slices, uv_err) = uv.expect("nonempty");
    if ico_err <= uv_err {
        check_count("sphere", target, icosphere_count(ico))?;
        icosphere(center, r, ico)
    } else {
        check_count("sphere", target, (stacks - 1) * slices + 2)?;
        uv_sphere(center, r, stacks, slices)
    }
}

fn icosphere(center: Vec3, r: f64, level: u32) -> Result<TriangleMesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| {
        // Tilt about x so the vertex (0, 1, t) sits on the +z pole.
        let (s, c) = (1.0f64).atan2(t).sin_cos();
        Vec3::new(x, c * y - s * z, s * y + c * z).normalized().expect("nonzero")
    })
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut m = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    verts.push((verts[a] + verts[b]).normalized().expect("nonzero"));
                    verts.len() - 1
                });
            }
            next.push([f[0], m[0], m[2]]);
            next.push([f[1], m[1], m[0]]);
            next.push([f[2], m[2], m[1]]);
            next.push([m[0], m[1], m[2]]);
        }
        faces = next;
    }
    TriangleMesh::new(verts.into_iter().map(|v| center + v * r).collect(), faces)
}

fn uv_sphere(center: Vec3, r: f64, stacks: usize, slices: usize) -> Result<TriangleMesh> {
    let mut verts = vec![center + Vec3::new(0.0, 0.0, r)];
    for i in 1..stacks {
        let phi = PI * i as f64 / stacks as f64;
        for k in 0..slices {
            let th = 2.0 * PI * k as f64 / slices as f64;
            verts.push(center + Vec3::new(phi.sin() * th.cos(), phi.sin() * th.sin(), phi.cos()) * r);
        }
    }
    verts.push(center - Vec3::new(0.0, 0.0, r));
    let bottom = verts.len() - 1;
    let ring = |i: usize, k: usize| 1 + (i - 1) * slices + (k % slices);
    let mut faces = Vec::new();
    for k in 0..slices {
        faces.push([0, ring(1, k), ring(1, k + 1)]);
        faces.push([bottom, ring(stacks - 1, k + 1), ring(stacks - 1, k)]);
    }
    for i in 1..stacks - 1 {
        for k in 0..slices {
            let (a, b, c, d) = (ring(i, k), ring(i, k + 1), ring(i + 1, k + 1), ring(i + 1, k));
            faces.push([a, d, c]);
            faces.push([a, c, b]);
        }
    }
    TriangleMesh::new(verts, faces)
}

fn make_tetrahedron(edge: f64, target: usize) -> Result<TriangleMesh> {
    if target < 4 {
        return Err(Error::InvalidArgument(format!(
            "unreachable vertex count {target} for tetrahedron (minimum 4)"
        )));
    }
    // n edge segments give 2n² + 2 vertices.
    let n = (1..=64usize)
        .min_by_key(|&n| ((2 * n * n + 2) as i64 - target as i64).abs())
        .expect("nonempty");
    check_count("tetrahedron", target, 2 * n * n + 2)?;
    let circum = edge / 3f64.sqrt();
    let base: Vec<Vec3> = (0..3)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / 3.0;
            Vec3::new(circum * th.cos(), circum * th.sin(), 0.0)
        })
        .collect();
    let apex = Vec3::new(0.0, 0.0, edge * (2.0f64 / 3.0).sqrt());
    let (b0, b1, b2) = (base[0], base[1], base[2]);
    // Outward winding.
    let tris = [[b0, b2, b1], [b0, b1, apex], [b1, b2, apex], [b2, b0, apex]];
    let mut w = Welder::new();
    for [a, b, c] in tris {
        let p = |i: usize, j: usize| a + (b - a) * (i as f64 / n as f64) + (c - a) * (j as f64 / n as f64);
        for i in 0..n {
            for j in 0..(n - i) {
                w.tri(p(i, j), p(i + 1, j), p(i, j + 1));
                if i + j + 1 < n {
                    w.tri(p(i + 1, j), p(i + 1, j + 1), p(i, j + 1));
                }
            }
        }
    }
    w.finish()
}
