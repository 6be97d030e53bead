use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Oriented ground rectangle with vertical extent. `l ≥ w`; `yaw` is the
/// angle of the length axis in degrees, in `[-90, 90)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

/// Oriented rectangle in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect2 {
    pub center: (f64, f64),
    pub length: f64,
    pub width: f64,
    /// Length axis angle, degrees in `[-90, 90)`.
    pub yaw: f64,
}

impl Rect2 {
    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// Corner points, counter-clockwise.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (s, c) = self.yaw.to_radians().sin_cos();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]
            .map(|(a, b)| (self.center.0 + a * c - b * s, self.center.1 + a * s + b * c))
    }
}

impl BoundingBox {
    /// Minimum-area box over `pts`. Degenerate extents are clamped to `min_extent`.
    pub fn fit(pts: &[Vec3], min_extent: f64) -> BoundingBox {
        let flat: Vec<(f64, f64)> = pts.iter().map(|p| (p.x, p.y)).collect();
        let r = min_area_rect(&flat, min_extent);
        let zmin = pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let zmax = pts.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
        BoundingBox {
            cx: r.center.0,
            cy: r.center.1,
            cz: 0.5 * (zmin + zmax),
            l: r.length,
            w: r.width,
            h: zmax - zmin,
            yaw: r.yaw,
        }
    }

    pub fn footprint(&self) -> Rect2 {
        Rect2 { center: (self.cx, self.cy), length: self.l, width: self.w, yaw: self.yaw }
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; strictly convex, counter-clockwise.
fn convex_hull(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

fn wrap_yaw(deg: f64) -> f64 {
    let y = (deg + 90.0).rem_euclid(180.0) - 90.0;
    if y >= 90.0 {
        y - 180.0
    } else {
        y
    }
}

/// Extent of `pts` along axis `(ux, uy)` and its normal.
fn extents(pts: &[(f64, f64)], ux: f64, uy: f64) -> (f64, f64, f64, f64) {
    let (mut a0, mut a1, mut b0, mut b1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        let a = x * ux + y * uy;
        let b = -x * uy + y * ux;
        a0 = a0.min(a);
        a1 = a1.max(a);
        b0 = b0.min(b);
        b1 = b1.max(b);
    }
    (a0, a1, b0, b1)
}

/// Rotating-calipers minimum-area rectangle: one side is collinear with a
/// hull edge. Extents below `min_extent` are raised to it.
pub fn min_area_rect(pts: &[(f64, f64)], min_extent: f64) -> Rect2 {
    assert!(!pts.is_empty(), "rectangle needs at least one point");
    let hull = convex_hull(pts);
    let mut best: Option<(f64, f64, f64, (f64, f64, f64, f64))> = None;
    let edges = if hull.len() < 2 { 0 } else { hull.len() };
    for i in 0..edges {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let (ux, uy) = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        let ext = extents(&hull, ux, uy);
        let area = (ext.1 - ext.0) * (ext.3 - ext.2);
        if best.map_or(true, |(ba, ..)| area < ba) {
            best = Some((area, ux, uy, ext));
        }
    }
    let (ux, uy, (a0, a1, b0, b1)) = match best {
        Some((_, ux, uy, e)) => (ux, uy, e),
        None => (1.0, 0.0, extents(&hull, 1.0, 0.0)),
    };
    let (am, bm) = (0.5 * (a0 + a1), 0.5 * (b0 + b1));
    let center = (am * ux - bm * uy, am * uy + bm * ux);
    let (ea, eb) = (a1 - a0, b1 - b0);
    let (length, width, axis) = if ea >= eb { (ea, eb, uy.atan2(ux)) } else { (eb, ea, ux.atan2(-uy)) };
    Rect2 {
        center,
        length: length.max(min_extent),
        width: width.max(min_extent),
        yaw: wrap_yaw(axis.to_degrees()),
    }
}
