//! Differentiable soft-count aggregation.
//!
//! Each point spreads unit mass over the 8 lattice cells around it. Along each
//! axis the lower neighbor receives `1 − d` and the upper neighbor `d`, where
//! `d = d(u, ⌊u⌋)` is the proxy distance from the point coordinate to its
//! lower lattice line. With the linear distance this is trilinear
//! interpolation; the tanh distance sharpens it toward floor binning.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::lidar_sim::PointCloud;

use super::{channel, hard_features, FeatureMap, GridSpec, Region};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyMode {
    Trilinear,
    Tanh,
    Interpolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxyConfig {
    pub mode: ProxyMode,
    /// Sharpness of the tanh distance.
    pub mu: f64,
    /// Weight of the tanh term in the interpolated distance.
    pub alpha: f64,
    /// Denominator guard for mean features; also the occupancy threshold.
    pub eps: f64,
    /// Pass gradients through the occupancy indicator of the max-height and
    /// non-empty channels. When off, those channels get their exact
    /// (almost everywhere zero) derivative.
    pub straight_through: bool,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig { mode: ProxyMode::Interpolated, mu: 20.0, alpha: 0.9, eps: 1e-7, straight_through: true }
    }
}

impl ProxyConfig {
    pub fn trilinear() -> Self {
        ProxyConfig { mode: ProxyMode::Trilinear, ..Default::default() }
    }

    pub fn tanh() -> Self {
        ProxyConfig { mode: ProxyMode::Tanh, ..Default::default() }
    }

    fn tanh_distance(scale: f64, u1: f64, u2: f64) -> f64 {
        0.5 + 0.5 * (scale * (u1 - u2 - 1.0)).tanh()
    }

    /// The proxy distance `d(u1, u2)`.
    pub fn distance(&self, u1: f64, u2: f64) -> f64 {
        let linear = u1 - u2.floor();
        match self.mode {
            ProxyMode::Trilinear => linear,
            ProxyMode::Tanh => Self::tanh_distance(self.mu, u1, u2),
            ProxyMode::Interpolated => {
                self.alpha * Self::tanh_distance(5.0 * self.mu, u1, u2) + (1.0 - self.alpha) * linear
            }
        }
    }

    /// `(g, dg/du)` for `g = d(u, ⌊u⌋)`, the weight of the upper neighbor.
    fn kernel(&self, u: f64) -> (f64, f64) {
        let f = u - u.floor();
        let tanh_term = |scale: f64| {
            let th = (scale * (f - 1.0)).tanh();
            (0.5 + 0.5 * th, 0.5 * scale * (1.0 - th * th))
        };
        match self.mode {
            ProxyMode::Trilinear => (f, 1.0),
            ProxyMode::Tanh => tanh_term(self.mu),
            ProxyMode::Interpolated => {
                let (g, dg) = tanh_term(5.0 * self.mu);
                (self.alpha * g + (1.0 - self.alpha) * f, self.alpha * dg + (1.0 - self.alpha))
            }
        }
    }
}

/// Soft counts (and intensity-weighted soft counts) over `region × slabs`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftGrid {
    pub region: Region,
    pub slabs: usize,
    pub mass: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl SoftGrid {
    pub fn zeros(region: Region, slabs: usize) -> Self {
        let n = region.len() * slabs;
        SoftGrid { region, slabs, mass: vec![0.0; n], intensity: vec![0.0; n] }
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize, p: usize) -> usize {
        self.region.offset(r, c) * self.slabs + p
    }

    pub fn mass_at(&self, r: usize, c: usize, p: usize) -> f64 {
        self.mass[self.index(r, c, p)]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Per-point lattice stencil: lower corner and per-axis (lower, upper)
/// weights with their derivatives w.r.t. the world coordinate.
struct Stencil {
    base: [i64; 3],
    w: [[f64; 2]; 3],
    dw: [[f64; 2]; 3],
}

fn stencil(p: Vec3, spec: &GridSpec, cfg: &ProxyConfig) -> Stencil {
    let (u, v) = spec.grid_coords(p.x, p.y);
    let dz = spec.slab_height();
    let top = (spec.slabs - 1) as f64;
    let w_raw = (p.z - spec.z_min) / dz;
    let (w, w_scale) = if w_raw < 0.0 {
        (0.0, 0.0)
    } else if w_raw > top {
        (top, 0.0)
    } else {
        (w_raw, 1.0 / dz)
    };
    let coords = [(u, 1.0 / spec.cell_size), (v, 1.0 / spec.cell_size), (w, w_scale)];
    let mut s = Stencil { base: [0; 3], w: [[0.0; 2]; 3], dw: [[0.0; 2]; 3] };
    for (a, &(x, scale)) in coords.iter().enumerate() {
        let (g, dg) = cfg.kernel(x);
        s.base[a] = x.floor() as i64;
        s.w[a] = [1.0 - g, g];
        s.dw[a] = [-dg * scale, dg * scale];
    }
    s
}

/// Visit the stencil corners that fall in `region × [0, slabs)`.
fn for_corners(s: &Stencil, region: &Region, slabs: usize, mut f: impl FnMut(usize, usize, usize, [usize; 3])) {
    for du in 0..2 {
        let r = s.base[0] + du as i64;
        if r < region.r0 as i64 || r >= region.r1 as i64 {
            continue;
        }
        for dv in 0..2 {
            let c = s.base[1] + dv as i64;
            if c < region.c0 as i64 || c >= region.c1 as i64 {
                continue;
            }
            for dp in 0..2 {
                let p = s.base[2] + dp as i64;
                if p < 0 || p >= slabs as i64 {
                    continue;
                }
                f(r as usize, c as usize, p as usize, [du, dv, dp]);
            }
        }
    }
}

pub fn soft_count(cloud: &PointCloud, spec: &GridSpec, cfg: &ProxyConfig) -> SoftGrid {
    soft_count_region(cloud, spec, cfg, spec.full_region())
}

/// Soft counts restricted to the columns of `region`.
pub fn soft_count_region(cloud: &PointCloud, spec: &GridSpec, cfg: &ProxyConfig, region: Region) -> SoftGrid {
    let mut g = SoftGrid::zeros(region, spec.slabs);
    for pt in &cloud.points {
        let s = stencil(pt.position, spec, cfg);
        for_corners(&s, &region, spec.slabs, |r, c, p, k| {
            let wt = s.w[0][k[0]] * s.w[1][k[1]] * s.w[2][k[2]];
            let i = g.index(r, c, p);
            g.mass[i] += wt;
            g.intensity[i] += wt * pt.intensity;
        });
    }
    g
}

/// Gradient of `⟨adjoint.mass, G⟩ + ⟨adjoint.intensity, I⟩` w.r.t. each point position.
pub fn soft_count_backward(cloud: &PointCloud, spec: &GridSpec, cfg: &ProxyConfig, adjoint: &SoftGrid) -> Vec<Vec3> {
    cloud
        .points
        .iter()
        .map(|pt| {
            let s = stencil(pt.position, spec, cfg);
            let mut grad = [0.0; 3];
            for_corners(&s, &adjoint.region, adjoint.slabs, |r, c, p, k| {
                let i = adjoint.index(r, c, p);
                let a = adjoint.mass[i] + adjoint.intensity[i] * pt.intensity;
                if a == 0.0 {
                    return;
                }
                let w = [s.w[0][k[0]], s.w[1][k[1]], s.w[2][k[2]]];
                let dw = [s.dw[0][k[0]], s.dw[1][k[1]], s.dw[2][k[2]]];
                grad[0] += a * dw[0] * w[1] * w[2];
                grad[1] += a * w[0] * dw[1] * w[2];
                grad[2] += a * w[0] * w[1] * dw[2];
            });
            Vec3::from_array(grad)
        })
        .collect()
}

/// Highest slab whose soft count exceeds the occupancy threshold.
fn top_slab(g: &SoftGrid, r: usize, c: usize, eps: f64) -> Option<usize> {
    (0..g.slabs).rev().find(|&p| g.mass_at(r, c, p) > eps)
}

/// Column statistics from soft counts. Columns outside `g.region` keep only
/// the grid-geometry channels.
pub fn soft_features(g: &SoftGrid, spec: &GridSpec, cfg: &ProxyConfig) -> FeatureMap {
    let mut map = FeatureMap::with_geometry(spec);
    let eps = cfg.eps;
    for (r, c) in g.region.cells() {
        let base = g.index(r, c, 0);
        let mass = &g.mass[base..base + g.slabs];
        let inten = &g.intensity[base..base + g.slabs];
        let m: f64 = mass.iter().sum();
        let s: f64 = mass.iter().enumerate().map(|(p, x)| x * spec.slab_level(p)).sum();
        let si: f64 = inten.iter().sum();
        map.set(r, c, channel::COUNT, m);
        map.set(r, c, channel::MEAN_HEIGHT, s / (m + eps));
        map.set(r, c, channel::MEAN_INTENSITY, si / (m + eps));
        map.set(r, c, channel::NON_EMPTY, if m > eps { 1.0 } else { 0.0 });
        if let Some(top) = top_slab(g, r, c, eps) {
            map.set(r, c, channel::MAX_HEIGHT, spec.slab_level(top));
            map.set(r, c, channel::MAX_INTENSITY, inten[top] / (mass[top] + eps));
        }
    }
    map
}

/// Backward rule of [`soft_features`].
///
/// Mean channels use the quotient rule. The occupancy indicator inside the
/// max-height and non-empty channels is passed straight through (treated as
/// the identity on `G`), so max height routes `adjoint · level` to the top
/// occupied slab and non-empty routes its adjoint to every slab. Direction and
/// distance carry no gradient. `cfg.straight_through` off drops the
/// surrogate terms.
pub fn soft_features_backward(g: &SoftGrid, spec: &GridSpec, cfg: &ProxyConfig, adjoint: &FeatureMap) -> SoftGrid {
    let mut out = SoftGrid::zeros(g.region, g.slabs);
    let eps = cfg.eps;
    for (r, c) in g.region.cells() {
        let a = adjoint.cell(r, c);
        let base = g.index(r, c, 0);
        let mass = &g.mass[base..base + g.slabs];
        let inten = &g.intensity[base..base + g.slabs];
        let m: f64 = mass.iter().sum();
        let denom = m + eps;
        let mean_h = mass.iter().enumerate().map(|(p, x)| x * spec.slab_level(p)).sum::<f64>() / denom;
        let mean_i = inten.iter().sum::<f64>() / denom;
        let st = if cfg.straight_through { 1.0 } else { 0.0 };
        let common = a[channel::COUNT] + st * a[channel::NON_EMPTY] - a[channel::MEAN_INTENSITY] * mean_i / denom;
        for p in 0..g.slabs {
            out.mass[base + p] = common + a[channel::MEAN_HEIGHT] * (spec.slab_level(p) - mean_h) / denom;
            out.intensity[base + p] = a[channel::MEAN_INTENSITY] / denom;
        }
        if let Some(top) = top_slab(g, r, c, eps) {
            let d = mass[top] + eps;
            out.mass[base + top] += st * a[channel::MAX_HEIGHT] * spec.slab_level(top);
            out.mass[base + top] -= a[channel::MAX_INTENSITY] * inten[top] / (d * d);
            out.intensity[base + top] += a[channel::MAX_INTENSITY] / d;
        }
    }
    out
}

/// L1 gap between the soft and hard count channels for the trilinear and
/// tanh distances.
pub fn proxy_error(cloud: &PointCloud, spec: &GridSpec) -> (f64, f64) {
    let hard = hard_features(cloud, spec).channel(channel::COUNT);
    let err = |cfg: ProxyConfig| {
        let soft = soft_features(&soft_count(cloud, spec, &cfg), spec, &cfg).channel(channel::COUNT);
        soft.iter().zip(&hard).map(|(s, h)| (s - h).abs()).sum::<f64>()
    };
    (err(ProxyConfig::trilinear()), err(ProxyConfig::tanh()))
}
