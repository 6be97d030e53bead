use crate::error::{Error, Result};
use crate::features::{GridSpec, Region};
use crate::geometry::{Pose, TriangleMesh};

/// Cells under the posed object's ground-plane bounding box, dilated by one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    /// Undilated footprint block.
    pub core: Region,
    /// Masked block.
    pub region: Region,
}

impl Mask {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.region.contains(r, c)
    }

    pub fn len(&self) -> usize {
        self.region.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region.is_empty()
    }

    /// Row-major boolean grid.
    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.rows * self.cols).map(|i| self.contains(i / self.cols, i % self.cols)).collect()
    }

    /// Ground-plane rectangle `(x0, x1, y0, y1)` covered by the masked cells.
    pub fn world_rect(&self, spec: &GridSpec) -> (f64, f64, f64, f64) {
        let cs = spec.cell_size;
        (
            spec.origin.x + self.region.r0 as f64 * cs,
            spec.origin.x + self.region.r1 as f64 * cs,
            spec.origin.y + self.region.c0 as f64 * cs,
            spec.origin.y + self.region.c1 as f64 * cs,
        )
    }
}

pub fn build_mask(mesh: &TriangleMesh, pose: &Pose, spec: &GridSpec) -> Result<Mask> {
    let (lo, hi) = mesh.place(pose).bounds();
    let core = spec
        .cells_covering(lo.x, hi.x, lo.y, hi.y)
        .ok_or_else(|| Error::Config(format!("object at pose {pose:?} does not overlap the grid")))?;
    Ok(Mask { rows: spec.rows, cols: spec.cols, core, region: core.dilate(1, spec.rows, spec.cols) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_primitive, PrimitiveKind, Vec3};

    #[test]
    fn cube_at_eight_meters() {
        let spec = GridSpec::default();
        let cube = make_primitive(PrimitiveKind::Cube, 0.5, 386).unwrap();
        let m = build_mask(&cube, &Pose::new(Vec3::new(8.0, 0.0, 0.0), 0.0), &spec).unwrap();
        assert_eq!((m.core.rows(), m.core.cols()), (4, 4));
        assert_eq!((m.region.rows(), m.region.cols()), (6, 6));
        assert!(m.core.cells().all(|(r, c)| m.contains(r, c)));
        assert!(m.len() > m.core.len());
    }

    #[test]
    fn outside_grid_is_an_error() {
        let cube = make_primitive(PrimitiveKind::Cube, 0.5, 386).unwrap();
        let err = build_mask(&cube, &Pose::new(Vec3::new(-5.0, 0.0, 0.0), 0.0), &GridSpec::default());
        assert!(err.unwrap_err().is_config());
    }
}
