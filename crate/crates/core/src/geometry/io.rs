use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{TriangleMesh, Vec3};

/// Parse a Wavefront OBJ containing `v` and triangular `f` records.
///
/// Face entries may carry texture/normal indices (`1/2/3`); only the vertex
/// index is used. Negative (relative) indices are supported.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                if c.len() != 3 {
                    return Err(Error::Parse(format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        let i: i64 = head
                            .parse()
                            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                        let n = vertices.len() as i64;
                        let abs = if i < 0 { n + i } else { i - 1 };
                        if abs < 0 || abs >= n {
                            return Err(Error::Parse(format!("line {}: face index {i} out of range", lineno + 1)));
                        }
                        Ok(abs as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::Parse(format!(
                        "line {}: only triangular faces are supported",
                        lineno + 1
                    )));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn obj_string(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        // `{:?}` on f64 prints the shortest round-tripping representation.
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    parse_obj(&fs::read_to_string(path)?)
}

pub fn write_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, obj_string(mesh))?;
    Ok(())
}

/// Binary STL: 80-byte header, u32 triangle count, then per triangle a normal,
/// three vertices (all little-endian f32) and a zero attribute word.
pub fn stl_bytes(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.faces().len());
    let mut header = [0u8; 80];
    let tag = b"lidar-adv binary STL";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.faces().len() as u32).to_le_bytes());
    let v = mesh.vertices();
    for f in mesh.faces() {
        let (a, b, c) = (v[f[0]], v[f[1]], v[f[2]]);
        let n = (b - a).cross(c - a).normalized().unwrap_or(Vec3::ZERO);
        for p in [n, a, b, c] {
            for x in p.to_array() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

pub fn write_stl(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, stl_bytes(mesh))?;
    Ok(())
}
