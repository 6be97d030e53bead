use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub position: Vec3,
    /// Reflectance in `[0, 1]`.
    pub intensity: f64,
}

impl CloudPoint {
    pub fn new(position: Vec3, intensity: f64) -> Self {
        CloudPoint { position, intensity }
    }
}

/// An ordered set of LiDAR returns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<CloudPoint>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !p.position.is_finite() || !(0.0..=1.0).contains(&p.intensity) {
                return Err(Error::InvalidInput(format!("point {i} is not finite or has intensity outside [0,1]")));
            }
        }
        Ok(())
    }

    /// CSV with header `x,y,z,intensity`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,z,intensity\n");
        for p in &self.points {
            s.push_str(&format!("{:?},{:?},{:?},{:?}\n", p.position.x, p.position.y, p.position.z, p.intensity));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("").trim();
        if header.replace(' ', "") != "x,y,z,intensity" {
            return Err(Error::Parse(format!("expected header 'x,y,z,intensity', got '{header}'")));
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", i + 2)))?;
            if vals.len() != 4 {
                return Err(Error::Parse(format!("row {}: expected 4 fields", i + 2)));
            }
            points.push(CloudPoint::new(Vec3::new(vals[0], vals[1], vals[2]), vals[3]));
        }
        let cloud = PointCloud { points };
        cloud.validate()?;
        Ok(cloud)
    }

    /// Little-endian u64 record count followed by `f32` quadruples `(x, y, z, intensity)`.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 * self.points.len());
        out.extend_from_slice(&(self.points.len() as u64).to_le_bytes());
        for p in &self.points {
            for v in [p.position.x, p.position.y, p.position.z, p.intensity] {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Parse("binary cloud shorter than its 8-byte header".into()));
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        let body = &bytes[8..];
        if body.len() != n.checked_mul(16).ok_or_else(|| Error::Parse("record count overflow".into()))? {
            return Err(Error::Parse(format!("expected {n} records, found {} bytes", body.len())));
        }
        let f = |c: &[u8]| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
        let points = body
            .chunks_exact(16)
            .map(|r| CloudPoint::new(Vec3::new(f(&r[0..4]), f(&r[4..8]), f(&r[8..12])), f(&r[12..16])))
            .collect();
        let cloud = PointCloud { points };
        cloud.validate()?;
        Ok(cloud)
    }

    /// Reads `.csv` as CSV and anything else as the binary format.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "csv") {
            Self::from_csv(&fs::read_to_string(path)?)
        } else {
            Self::from_binary(&fs::read(path)?)
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            f.write_all(self.to_csv().as_bytes())?;
        } else {
            f.write_all(&self.to_binary())?;
        }
        Ok(())
    }
}
