use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const CHANNELS: usize = 8;

/// Channel indices of a [`FeatureMap`].
pub mod channel {
    pub const MAX_HEIGHT: usize = 0;
    pub const MAX_INTENSITY: usize = 1;
    pub const MEAN_HEIGHT: usize = 2;
    pub const MEAN_INTENSITY: usize = 3;
    pub const COUNT: usize = 4;
    pub const DIRECTION: usize = 5;
    pub const DISTANCE: usize = 6;
    pub const NON_EMPTY: usize = 7;
}

pub const CHANNEL_NAMES: [&str; CHANNELS] = [
    "max_height",
    "max_intensity",
    "mean_height",
    "mean_intensity",
    "count",
    "direction",
    "distance",
    "non_empty",
];

/// Closed axis-aligned rectangle in the ground plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Half-open block of grid cells `[r0, r1) × [c0, c1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
}

impl Region {
    pub fn full(rows: usize, cols: usize) -> Self {
        Region { r0: 0, r1: rows, c0: 0, c1: cols }
    }

    pub fn rows(&self) -> usize {
        self.r1.saturating_sub(self.r0)
    }

    pub fn cols(&self) -> usize {
        self.c1.saturating_sub(self.c0)
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.r0 && r < self.r1 && c >= self.c0 && c < self.c1
    }

    /// Grow by `k` cells on every side, clipped to a `rows × cols` grid.
    pub fn dilate(&self, k: usize, rows: usize, cols: usize) -> Region {
        Region {
            r0: self.r0.saturating_sub(k),
            r1: (self.r1 + k).min(rows),
            c0: self.c0.saturating_sub(k),
            c1: (self.c1 + k).min(cols),
        }
    }

    /// Offset of `(r, c)` in row-major order within the region.
    pub fn offset(&self, r: usize, c: usize) -> usize {
        (r - self.r0) * self.cols() + (c - self.c0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.r0..self.r1).flat_map(move |r| (self.c0..self.c1).map(move |c| (r, c)))
    }
}

/// Bird's-eye grid geometry. Rows run along +x, columns along +y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Height slabs used by the soft aggregation.
    pub slabs: usize,
    pub cell_size: f64,
    /// Ground-plane corner of cell (0, 0).
    pub origin: Vec3,
    pub z_min: f64,
    pub z_max: f64,
    pub roi: Rect,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 128,
            cols: 128,
            slabs: 40,
            cell_size: 0.125,
            origin: Vec3::new(0.0, -8.0, 0.0),
            z_min: -0.5,
            z_max: 3.5,
            roi: Rect { x_min: 0.0, x_max: 16.0, y_min: -8.0, y_max: 8.0 },
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.slabs == 0 {
            return Err(Error::Config("grid rows, cols and slabs must be at least 1".into()));
        }
        if !(self.cell_size > 0.0) || !(self.z_min < self.z_max) {
            return Err(Error::Config("grid needs cell_size > 0 and z_min < z_max".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn full_region(&self) -> Region {
        Region::full(self.rows, self.cols)
    }

    pub fn slab_height(&self) -> f64 {
        (self.z_max - self.z_min) / self.slabs as f64
    }

    /// Height assigned to lattice slab `p`.
    pub fn slab_level(&self, p: usize) -> f64 {
        self.z_min + p as f64 * self.slab_height()
    }

    /// Continuous grid coordinates `(row, col)` of a ground-plane point.
    pub fn grid_coords(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin.x) / self.cell_size, (y - self.origin.y) / self.cell_size)
    }

    /// Cell containing `(x, y)` under floor binning.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (u, v) = self.grid_coords(x, y);
        let (r, c) = (u.floor(), v.floor());
        (r >= 0.0 && c >= 0.0 && r < self.rows as f64 && c < self.cols as f64).then(|| (r as usize, c as usize))
    }

    pub fn cell_center(&self, r: usize, c: usize) -> (f64, f64) {
        (
            self.origin.x + (r as f64 + 0.5) * self.cell_size,
            self.origin.y + (c as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cells overlapping the ground-plane box `[x0, x1] × [y0, y1]` with
    /// positive area, clipped to the grid. `None` if there is no overlap.
    pub fn cells_covering(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> Option<Region> {
        let (u0, v0) = self.grid_coords(x0, y0);
        let (u1, v1) = self.grid_coords(x1, y1);
        let r0 = u0.floor().max(0.0);
        let c0 = v0.floor().max(0.0);
        let r1 = u1.ceil().min(self.rows as f64);
        let c1 = v1.ceil().min(self.cols as f64);
        if !(r1 > r0 && c1 > c0) {
            return None;
        }
        let region = Region { r0: r0 as usize, r1: r1 as usize, c0: c0 as usize, c1: c1 as usize };
        (!region.is_empty()).then_some(region)
    }
}

/// `rows × cols × 8` bird's-eye feature grid in (row, col, channel) order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMap { rows, cols, data: vec![0.0; rows * cols * CHANNELS] }
    }

    /// Zeros everywhere except the grid-only direction and distance channels.
    pub fn with_geometry(spec: &GridSpec) -> Self {
        let mut m = FeatureMap::zeros(spec.rows, spec.cols);
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                let (x, y) = spec.cell_center(r, c);
                m.set(r, c, channel::DIRECTION, y.atan2(x));
                m.set(r, c, channel::DISTANCE, x.hypot(y));
            }
        }
        m
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize, ch: usize) -> usize {
        (r * self.cols + c) * CHANNELS + ch
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[self.index(r, c, ch)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: f64) {
        let i = self.index(r, c, ch);
        self.data[i] = v;
    }

    pub fn cell(&self, r: usize, c: usize) -> &[f64] {
        let i = self.index(r, c, 0);
        &self.data[i..i + CHANNELS]
    }

    pub fn channel(&self, ch: usize) -> Vec<f64> {
        self.data.iter().skip(ch).step_by(CHANNELS).copied().collect()
    }

    /// Flat little-endian `f32` dump in (row, col, channel) order.
    pub fn to_f32_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
    }

    pub fn from_f32_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != rows * cols * CHANNELS * 4 {
            return Err(Error::Parse(format!(
                "feature blob has {} bytes, expected {}",
                bytes.len(),
                rows * cols * CHANNELS * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        Ok(FeatureMap { rows, cols, data })
    }

    /// Writes `<stem>.bin` (f32 blob) and `<stem>.json` (grid sidecar).
    pub fn export(&self, spec: &GridSpec, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        fs::write(stem.with_extension("bin"), self.to_f32_bytes())?;
        let sidecar = serde_json::json!({
            "format": "f32le",
            "layout": ["row", "col", "channel"],
            "channels": CHANNEL_NAMES,
            "grid": spec,
        });
        fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}
