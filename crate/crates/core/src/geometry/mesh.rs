use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

use super::{Pose, Vec3};

/// Minimum face area in m².
const MIN_FACE_AREA: f64 = 1e-12;

/// Per-vertex neighbor sets derived from shared edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn from_faces(vertex_count: usize, faces: &[[usize; 3]]) -> Self {
        let mut sets = vec![BTreeSet::new(); vertex_count];
        for f in faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        Adjacency {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    /// Build directly from neighbor lists (used for tiny hand-built graphs).
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize)]) -> Self {
        let mut sets = vec![BTreeSet::new(); vertex_count];
        for &(a, b) in edges {
            sets[a].insert(b);
            sets[b].insert(a);
        }
        Adjacency {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors
            .iter()
            .enumerate()
            .all(|(i, ns)| ns.iter().all(|&q| self.neighbors[q].binary_search(&i).is_ok()))
    }
}

/// Triangle mesh with derived vertex adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    adjacency: Adjacency,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite vertex {v:?}")));
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidInput(format!(
                    "face {fi} references vertex out of range ({n} vertices)"
                )));
            }
            let area = face_area(&vertices, f);
            if !(area > MIN_FACE_AREA) {
                return Err(Error::InvalidInput(format!("face {fi} is degenerate (area {area:e})")));
            }
        }
        let adjacency = Adjacency::from_faces(n, &faces);
        Ok(TriangleMesh { vertices, faces, adjacency })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Same connectivity, new vertex positions. Faces may become degenerate
    /// under large displacements; they are kept, since ray casting skips them.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> TriangleMesh {
        assert_eq!(vertices.len(), self.vertices.len(), "vertex count mismatch");
        TriangleMesh {
            vertices,
            faces: self.faces.clone(),
            adjacency: self.adjacency.clone(),
        }
    }

    /// Vertices offset by a per-vertex displacement.
    pub fn displaced(&self, disp: &[Vec3]) -> TriangleMesh {
        assert_eq!(disp.len(), self.vertices.len(), "displacement length mismatch");
        self.with_vertices(self.vertices.iter().zip(disp).map(|(v, d)| *v + *d).collect())
    }

    /// Mean of the vertex positions.
    pub fn centroid(&self) -> Vec3 {
        if self.vertices.is_empty() {
            return Vec3::ZERO;
        }
        let mut s = Vec3::ZERO;
        for v in &self.vertices {
            s += *v;
        }
        s / self.vertices.len() as f64
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let inf = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        self.vertices
            .iter()
            .fold((inf, -inf), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }

    /// Rotate by the pose yaw about the vertical axis through the centroid,
    /// then translate. Faces are unchanged.
    pub fn apply_pose(&self, pose: &Pose) -> TriangleMesh {
        let t = pose.transform_about(self.centroid());
        self.with_vertices(self.vertices.iter().map(|v| t.apply(*v)).collect())
    }

    /// Place an object-frame mesh: rotate by the pose yaw about the frame's
    /// vertical axis, then translate.
    pub fn place(&self, pose: &Pose) -> TriangleMesh {
        let t = pose.transform_about(Vec3::ZERO);
        self.with_vertices(self.vertices.iter().map(|v| t.apply(*v)).collect())
    }

    /// Every undirected edge is shared by exactly two faces.
    pub fn is_closed(&self) -> bool {
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        !counts.is_empty() && counts.values().all(|&c| c == 2)
    }

    /// Concatenate meshes; returns the merged mesh and each part's face offset.
    pub fn merge(parts: &[TriangleMesh]) -> (TriangleMesh, Vec<usize>) {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut offsets = Vec::with_capacity(parts.len());
        for m in parts {
            let base = vertices.len();
            offsets.push(faces.len());
            vertices.extend_from_slice(&m.vertices);
            faces.extend(m.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        let adjacency = Adjacency::from_faces(vertices.len(), &faces);
        (TriangleMesh { vertices, faces, adjacency }, offsets)
    }

    pub fn surface_area(&self) -> f64 {
        self.faces.iter().map(|f| face_area(&self.vertices, f)).sum()
    }
}

fn face_area(v: &[Vec3], f: &[usize; 3]) -> f64 {
    0.5 * (v[f[1]] - v[f[0]]).cross(v[f[2]] - v[f[0]]).norm()
}
