//! Shared oracles for the integration tests: central finite differences,
//! random clouds and a brute-force rectangle sweep.
#![allow(dead_code)]

use lidar_adv::attack::{total_loss, AttackConfig, AttackGoal, AttackScene};
use lidar_adv::detector::{backward, forward, DetectorParams, ModelOutput};
use lidar_adv::features::{
    roi_filter,
    channel, soft_count_backward, soft_count_region, soft_features, soft_features_backward, FeatureMap, GridSpec,
    ProxyConfig, Rect, Region, SoftGrid, soft_count,
};
use lidar_adv::geometry::{l2_loss, laplacian_loss, make_box, make_primitive, Pose, PrimitiveKind, TriangleMesh, Vec3};
use lidar_adv::lidar_sim::{hit_backward, intersect, render_scene, CloudPoint, DEFAULT_OBJECT_INTENSITY, PointCloud, RayBundle};
use lidar_adv::detector::DEFAULT_CLASSES;
use lidar_adv::postprocess::{cluster, filter_and_classify, min_area_rect, CONFIDENCE_GATE, MIN_POINTS_EXCLUSIVE, OBJECTNESS_GATE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::Command;

/// Worst relative error over a batch of gradient comparisons.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheck {
    pub cases: usize,
    pub worst: f64,
}

impl GradCheck {
    pub fn push(&mut self, analytic: f64, numeric: f64) {
        self.push_with_floor(analytic, numeric, 1e-6);
    }

    pub fn push_with_floor(&mut self, analytic: f64, numeric: f64, floor: f64) {
        self.cases += 1;
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        if std::env::var("GRAD_DEBUG").is_ok() && err > 1e-4 {
            eprintln!("analytic {analytic:e} numeric {numeric:e}");
        }
        self.worst = self.worst.max(err);
    }

    pub fn passes(&self, tol: f64, min_cases: usize) -> bool {
        self.cases >= min_cases && self.worst <= tol
    }
}

/// `|a - b| / max(|a|, |b|, 1e-6)`; the floor keeps near-zero gradients from
/// turning rounding noise into large ratios.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn central(h: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

fn nudge(v: Vec3, axis: usize, d: f64) -> Vec3 {
    let mut out = v;
    *out.component_mut(axis) += d;
    out
}

pub fn small_spec() -> GridSpec {
    GridSpec {
        rows: 12,
        cols: 12,
        slabs: 10,
        cell_size: 0.25,
        origin: Vec3::new(0.0, 0.0, 0.0),
        z_min: 0.0,
        z_max: 2.5,
        roi: Rect { x_min: 0.0, x_max: 3.0, y_min: 0.0, y_max: 3.0 },
    }
}

/// Uniform points strictly inside the grid volume.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, spec: &GridSpec) -> PointCloud {
    let xr = spec.rows as f64 * spec.cell_size;
    let yr = spec.cols as f64 * spec.cell_size;
    let top = spec.z_min + (spec.slabs - 1) as f64 * spec.slab_height();
    PointCloud::new(
        (0..n)
            .map(|_| {
                let p = Vec3::new(
                    spec.origin.x + rng.gen_range(0.0..xr),
                    spec.origin.y + rng.gen_range(0.0..yr),
                    rng.gen_range(spec.z_min..top),
                );
                CloudPoint::new(p, rng.gen_range(0.0..1.0))
            })
            .collect(),
    )
}

/// Points whose whole trilinear stencil lies inside the grid.
pub fn interior_cloud(rng: &mut ChaCha8Rng, n: usize, spec: &GridSpec) -> PointCloud {
    let cs = spec.cell_size;
    let x1 = (spec.rows - 1) as f64 * cs;
    let y1 = (spec.cols - 1) as f64 * cs;
    let z1 = spec.z_min + (spec.slabs - 1) as f64 * spec.slab_height();
    PointCloud::new(
        (0..n)
            .map(|_| {
                let p = Vec3::new(
                    spec.origin.x + rng.gen_range(0.0..x1),
                    spec.origin.y + rng.gen_range(0.0..y1),
                    rng.gen_range(spec.z_min..z1),
                );
                CloudPoint::new(p, rng.gen_range(0.0..1.0))
            })
            .collect(),
    )
}

pub fn random_disp(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Vec3> {
    if scale == 0.0 {
        return vec![Vec3::ZERO; n];
    }
    (0..n)
        .map(|_| Vec3::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
        .collect()
}

pub fn check_regularizers(seed: u64, cases: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = GradCheck::default();
    let meshes = [
        make_box(0.5, 0.5, 0.5, 98).unwrap(),
        make_primitive(PrimitiveKind::Sphere, 0.3, 80).unwrap(),
    ];
    for k in 0..cases {
        let mesh = &meshes[k % meshes.len()];
        let disp = random_disp(&mut rng, mesh.vertex_count(), 0.05);
        let i = rng.gen_range(0..disp.len());
        let axis = rng.gen_range(0..3);
        let eval = |d: f64, lap: bool| {
            let mut dd = disp.clone();
            dd[i] = nudge(dd[i], axis, d);
            if lap {
                laplacian_loss(&dd, mesh.adjacency()).0
            } else {
                l2_loss(&dd).0
            }
        };
        let lap = laplacian_loss(&disp, mesh.adjacency()).1[i][axis];
        let l2 = l2_loss(&disp).1[i][axis];
        let h = 1e-4;
        if k % 2 == 0 {
            check.push(lap, central(h, |d| eval(d, true)));
        } else {
            check.push(l2, central(h, |d| eval(d, false)));
        }
    }
    check
}

/// Hit point `o + t r` of one ray against one triangle, projected on an adjoint.
pub fn check_hit_backward(seed: u64, cases: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = GradCheck::default();
    while check.cases < cases {
        let verts: Vec<Vec3> = (0..3)
            .map(|_| Vec3::new(rng.gen_range(4.0..6.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let bary = {
            let (a, b): (f64, f64) = (rng.gen_range(0.1..0.8), rng.gen_range(0.1..0.8));
            let (a, b) = if a + b > 0.9 { (0.9 - b, 0.9 - a) } else { (a, b) };
            [a.max(0.05), b.max(0.05), 1.0 - a.max(0.05) - b.max(0.05)]
        };
        let target = verts[0] * bary[0] + verts[1] * bary[1] + verts[2] * bary[2];
        let origin = Vec3::new(0.0, rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let Some(dir) = (target - origin).normalized() else { continue };
        let rays = RayBundle { origin, directions: vec![dir], background: vec![None] };
        let mesh = TriangleMesh::new(verts.clone(), vec![[0, 1, 2]]).unwrap();
        let Some(hit) = intersect(&rays, &mesh)[0] else { continue };
        let adjoint = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let grad = hit_backward(&hit, &mesh, dir, adjoint);
        if grad.degenerate {
            continue;
        }
        let v = rng.gen_range(0..3);
        let axis = rng.gen_range(0..3);
        let numeric = central(1e-6, |d| {
            let mut vs = verts.clone();
            vs[v] = nudge(vs[v], axis, d);
            let m = TriangleMesh::new(vs, vec![[0, 1, 2]]).unwrap();
            let t = intersect(&rays, &m)[0].expect("perturbed ray still hits").t;
            (origin + dir * t).dot(adjoint)
        });
        check.push(grad.grads[v][axis], numeric);
    }
    check
}

fn random_soft_adjoint(rng: &mut ChaCha8Rng, region: Region, slabs: usize) -> SoftGrid {
    let mut a = SoftGrid::zeros(region, slabs);
    a.mass.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    a.intensity.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    a
}

fn soft_pairing(g: &SoftGrid, a: &SoftGrid) -> f64 {
    g.mass.iter().zip(&a.mass).map(|(x, y)| x * y).sum::<f64>()
        + g.intensity.iter().zip(&a.intensity).map(|(x, y)| x * y).sum::<f64>()
}

/// Soft count w.r.t. point coordinates, against a random linear functional.
pub fn check_soft_count(cfg: &ProxyConfig, seed: u64, cases: usize) -> GradCheck {
    let spec = small_spec();
    let region = spec.full_region();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = GradCheck::default();
    while check.cases < cases {
        let cloud = random_cloud(&mut rng, 20, &spec);
        let adjoint = random_soft_adjoint(&mut rng, region, spec.slabs);
        let grads = soft_count_backward(&cloud, &spec, cfg, &adjoint);
        for _ in 0..5 {
            let k = rng.gen_range(0..cloud.len());
            let axis = rng.gen_range(0..3);
            let numeric = central(1e-5, |d| {
                let mut c = cloud.clone();
                c.points[k].position = nudge(c.points[k].position, axis, d);
                soft_pairing(&soft_count_region(&c, &spec, cfg, region), &adjoint)
            });
            check.push(grads[k][axis], numeric);
        }
    }
    check
}

/// Channels whose forward map is smooth in the soft grid (the occupancy
/// thresholds of max height and non-empty are straight-through).
pub const SMOOTH_CHANNELS: [usize; 4] = [channel::COUNT, channel::MEAN_HEIGHT, channel::MEAN_INTENSITY, channel::MAX_INTENSITY];

pub fn check_soft_features(seed: u64, cases: usize) -> GradCheck {
    let spec = small_spec();
    let cfg = ProxyConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = GradCheck::default();
    while check.cases < cases {
        let cloud = random_cloud(&mut rng, 200, &spec);
        let g = soft_count_region(&cloud, &spec, &cfg, spec.full_region());
        let mut adjoint = FeatureMap::zeros(spec.rows, spec.cols);
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                for &ch in &SMOOTH_CHANNELS {
                    adjoint.set(r, c, ch, rng.gen_range(-1.0..1.0));
                }
            }
        }
        let back = soft_features_backward(&g, &spec, &cfg, &adjoint);
        let pairing = |m: &FeatureMap| -> f64 {
            m.data.iter().zip(&adjoint.data).map(|(x, y)| x * y).sum()
        };
        for _ in 0..10 {
            let i = rng.gen_range(0..g.mass.len());
            if g.mass[i] < 1e-3 {
                continue;
            }
            let intensity = rng.gen_bool(0.5);
            let numeric = central(1e-7, |d| {
                let mut gg = g.clone();
                if intensity {
                    gg.intensity[i] += d;
                } else {
                    gg.mass[i] += d;
                }
                pairing(&soft_features(&gg, &spec, &cfg))
            });
            let analytic = if intensity { back.intensity[i] } else { back.mass[i] };
            check.push(analytic, numeric);
        }
    }
    check
}

pub fn random_features(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> FeatureMap {
    let mut x = FeatureMap::zeros(rows, cols);
    x.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    x
}

pub fn check_detector_backward(seed: u64, cases: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = GradCheck::default();
    let (rows, cols) = (10, 10);
    while check.cases < cases {
        let params = DetectorParams::init(4, rng.gen());
        let x = random_features(&mut rng, rows, cols);
        let mut adjoint = ModelOutput::zeros(rows, cols, 4);
        adjoint.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let dx = backward(&params, &x, &adjoint).unwrap();
        for _ in 0..10 {
            let i = rng.gen_range(0..x.data.len());
            let numeric = central(1e-6, |d| {
                let mut xx = x.clone();
                xx.data[i] += d;
                let out = forward(&params, &xx).unwrap();
                out.data.iter().zip(&adjoint.data).map(|(a, b)| a * b).sum()
            });
            check.push(dx.data[i], numeric);
        }
    }
    check
}

/// End-to-end gradient of the attack objective at a random displacement of
/// per-coordinate size up to `scale` (zero checks the benign mesh).
/// Coordinates whose ±h perturbation leaves the current smooth piece (a
/// silhouette crossing, an occlusion change, a hit point crossing a lattice
/// plane, or a slab crossing the occupancy threshold) are skipped and redrawn.
pub fn check_total_loss(
    benign: &TriangleMesh,
    poses: &[Pose],
    scene: &AttackScene,
    goal: &AttackGoal,
    scale: f64,
    seed: u64,
    coords: usize,
) -> GradCheck {
    // The straight-through surrogate and the frozen positiveness weight are
    // invisible to finite differences; check the exact derivative instead.
    let cfg = AttackConfig {
        proxy: ProxyConfig { straight_through: false, ..Default::default() },
        freeze_pos: false,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = GradCheck::default();
    let h = 1e-5;
    for pose in poses {
        let disp = random_disp(&mut rng, benign.vertex_count(), scale);
        let base = total_loss(benign, &disp, std::slice::from_ref(pose), scene, goal, &cfg).unwrap();
        // Components far below the gradient's own scale sit in the roundoff
        // of the long sums behind the loss; judge them against that scale.
        let floor = 1e-6 * base.grad.iter().map(|g| g.x.abs().max(g.y.abs()).max(g.z.abs())).fold(1.0, f64::max);
        let active: Vec<usize> = (0..disp.len()).filter(|&i| base.grad[i].norm_squared() > 0.0).collect();
        // Everything piecewise constant in the displacement.
        let spec = &scene.spec;
        let faces = |d: &[Vec3]| -> (Vec<(usize, usize)>, Vec<usize>, Vec<[i64; 3]>, Vec<bool>) {
            let posed = benign.displaced(d).place(pose);
            let scan = render_scene(&posed, &scene.background, &scene.rays, DEFAULT_OBJECT_INTENSITY);
            let g = soft_count(&roi_filter(&scan.merged(), spec), spec, &cfg.proxy);
            // The tanh kernel does not vanish at the stencil edge.
            let lattice = scan
                .foreground
                .points
                .iter()
                .map(|p| {
                    let (u, v) = spec.grid_coords(p.position.x, p.position.y);
                    let w = (p.position.z - spec.z_min) / spec.slab_height();
                    [u.floor() as i64, v.floor() as i64, w.floor() as i64]
                })
                .collect();
            (
                scan.hits.iter().map(|h| (h.ray, h.face)).collect(),
                scan.occluded_indices,
                lattice,
                g.mass.iter().map(|m| *m > cfg.proxy.eps).collect(),
            )
        };
        let mut taken = 0;
        let mut attempts = 0;
        while taken < coords && attempts < 20 * coords && !active.is_empty() {
            attempts += 1;
            let i = active[rng.gen_range(0..active.len())];
            let axis = rng.gen_range(0..3);
            let shifted = |d: f64| {
                let mut dd = disp.clone();
                dd[i] = nudge(dd[i], axis, d);
                dd
            };
            if faces(&shifted(h)) != faces(&shifted(-h)) {
                continue;
            }
            let numeric = central(h, |d| {
                total_loss(benign, &shifted(d), std::slice::from_ref(pose), scene, goal, &cfg).unwrap().value
            });
            if std::env::var("GRAD_DEBUG").is_ok() && rel_err(base.grad[i][axis], numeric) > 1e-3 && (base.grad[i][axis] - numeric).abs() > 1e-3 * floor {
                for hh in [1e-3, 1e-4, 1e-6, 1e-7] {
                    let n2 = central(hh, |d| total_loss(benign, &shifted(d), std::slice::from_ref(pose), scene, goal, &cfg).unwrap().value);
                    let fp = total_loss(benign, &shifted(hh), std::slice::from_ref(pose), scene, goal, &cfg).unwrap().value;
                    let fm = total_loss(benign, &shifted(-hh), std::slice::from_ref(pose), scene, goal, &cfg).unwrap().value;
                    eprintln!("  h {hh:e} fd {n2:e} fwd {:e} bwd {:e}", (fp - base.value) / hh, (base.value - fm) / hh);
                }
            }
            check.push_with_floor(base.grad[i][axis], numeric, floor);
            taken += 1;
        }
    }
    check
}

/// Minimum-area rectangles by sweeping the orientation in 0.005° steps and
/// refining every local minimum by golden-section search. All refined minima
/// within `1e-9` relative area of the best are returned, since the minimum
/// rectangle need not be unique.
/// Each entry is `(center, length, width, yaw_deg)` with `length ≥ width`.
pub fn sweep_rects(pts: &[(f64, f64)]) -> Vec<((f64, f64), f64, f64, f64)> {
    let extent = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let (mut a0, mut a1, mut b0, mut b1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            let a = x * c + y * s;
            let b = -x * s + y * c;
            a0 = a0.min(a);
            a1 = a1.max(a);
            b0 = b0.min(b);
            b1 = b1.max(b);
        }
        (a0, a1, b0, b1)
    };
    let area = |theta: f64| {
        let (a0, a1, b0, b1) = extent(theta);
        (a1 - a0) * (b1 - b0)
    };
    let step = 0.005f64.to_radians();
    let n = (std::f64::consts::FRAC_PI_2 / step).ceil() as usize;
    let areas: Vec<f64> = (0..n).map(|i| area(i as f64 * step)).collect();
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut found: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        let (prev, next) = (areas[(i + n - 1) % n], areas[(i + 1) % n]);
        if areas[i] > prev || areas[i] > next {
            continue;
        }
        let (mut lo, mut hi) = ((i as f64 - 1.0) * step, (i as f64 + 1.0) * step);
        for _ in 0..80 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if area(m1) < area(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let theta = 0.5 * (lo + hi);
        found.push((area(theta), theta));
    }
    let best = found.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
    found
        .into_iter()
        .filter(|f| f.0 <= best * (1.0 + 1e-9))
        .map(|(_, theta)| {
            let (a0, a1, b0, b1) = extent(theta);
            let (s, c) = theta.sin_cos();
            let (am, bm) = (0.5 * (a0 + a1), 0.5 * (b0 + b1));
            let center = (am * c - bm * s, am * s + bm * c);
            let (la, lb) = (a1 - a0, b1 - b0);
            let (length, width, yaw) =
                if la >= lb { (la, lb, theta.to_degrees()) } else { (lb, la, theta.to_degrees() + 90.0) };
            (center, length, width, (yaw + 90.0).rem_euclid(180.0) - 90.0)
        })
        .collect()
}

/// Difference of two axis angles modulo 180°, in `[0, 90]`.
pub fn axis_angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

// Pipeline gate probes.

pub fn spec16() -> GridSpec {
    GridSpec { rows: 16, cols: 16, ..GridSpec::default() }
}

pub fn set_cell(o: &mut ModelOutput, r: usize, c: usize, obj: f64, pos: f64, cls: usize) {
    let cell = o.cell_mut(r, c);
    cell[0] = 0.0;
    cell[1] = 0.0;
    cell[2] = obj;
    cell[3] = pos;
    for k in 0..DEFAULT_CLASSES {
        cell[5 + k] = if k == cls { 0.7 } else { 0.1 };
    }
}

pub fn points_in_cell(spec: &GridSpec, r: usize, c: usize, n: usize) -> PointCloud {
    let (x, y) = spec.cell_center(r, c);
    PointCloud::new((0..n).map(|k| CloudPoint::new(Vec3::new(x + 0.01 * k as f64, y, 0.1 * k as f64), 0.5)).collect())
}

/// Number of obstacles from one gated cell with the given objectness,
/// positiveness and point count.
pub fn survivors(obj: f64, pos: f64, points: usize) -> usize {
    let spec = spec16();
    let mut o = ModelOutput::zeros(16, 16, DEFAULT_CLASSES);
    set_cell(&mut o, 5, 6, obj, pos, 2);
    let cloud = points_in_cell(&spec, 5, 6, points);
    filter_and_classify(cluster(&o, &cloud, &spec).unwrap()).len()
}

pub fn above(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

/// The three gates are strict inequalities at exactly the stated values.
pub fn gates_are_exact() -> bool {
    survivors(OBJECTNESS_GATE, 0.9, 10) == 0
        && survivors(above(OBJECTNESS_GATE), 0.9, 10) == 1
        && survivors(0.9, CONFIDENCE_GATE, 10) == 0
        && survivors(0.9, above(CONFIDENCE_GATE), 10) == 1
        && survivors(0.9, 0.9, MIN_POINTS_EXCLUSIVE) == 0
        && survivors(0.9, 0.9, MIN_POINTS_EXCLUSIVE + 1) == 1
        && OBJECTNESS_GATE == 0.5
        && CONFIDENCE_GATE == 0.1
        && MIN_POINTS_EXCLUSIVE == 3
}


/// Elongated random point set, rotated, so the minimum rectangle is unique.
pub fn random_blob(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let n = rng.gen_range(4..60);
    let (a, b) = (rng.gen_range(0.8..3.0), rng.gen_range(0.1..0.5));
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let (s, c) = theta.sin_cos();
    let (cx, cy) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    (0..n)
        .map(|_| {
            let (u, v) = (rng.gen_range(-a..a), rng.gen_range(-b..b));
            (cx + u * c - v * s, cy + u * s + v * c)
        })
        .collect()
}

/// Largest deviation (meters, degrees) between the calipers rectangle and the
/// sweep oracle over `cases` random sets.
pub fn box_oracle_gap(seed: u64, cases: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dm, mut dd) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let pts = random_blob(&mut rng);
        let r = min_area_rect(&pts, 1e-3);
        let gap = |&(center, l, w, yaw): &((f64, f64), f64, f64, f64)| {
            let lin = [(r.center.0 - center.0).abs(), (r.center.1 - center.1).abs(), (r.length - l).abs(), (r.width - w).abs()];
            (lin.into_iter().fold(0.0, f64::max), axis_angle_gap(r.yaw, yaw))
        };
        // Compare against the nearest of the co-minimal rectangles.
        let (m, d) = sweep_rects(&pts).iter().map(gap).min_by(|a, b| a.1.total_cmp(&b.1)).expect("at least one minimum");
        dm = dm.max(m);
        dd = dd.max(d);
    }
    (dm, dd)
}


// Command-line runs.

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lidar-adv"))
}

pub fn invoke(args: &[&str]) -> std::process::Output {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

pub fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Run `sub args`, then re-run `sub` from the first run's manifest into a
/// fresh directory, and compare every listed output byte for byte.
pub fn reproduces(root: &Path, name: &str, sub: &str, args: &[&str]) -> bool {
    let first = root.join(format!("{name}-a"));
    let second = root.join(format!("{name}-b"));
    let mut a = vec![sub, "--out", first.to_str().unwrap()];
    a.extend_from_slice(args);
    invoke(&a);
    let m = first.join("manifest.json");
    invoke(&[sub, "--config", m.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    let (ma, mb) = (manifest(&first), manifest(&second));
    let outputs: Vec<String> = ma["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    !outputs.is_empty()
        && ma["config"] == mb["config"]
        && ma["outputs"] == mb["outputs"]
        && outputs.iter().all(|f| std::fs::read(first.join(f)).unwrap() == std::fs::read(second.join(f)).unwrap())
}


pub fn write_config(root: &Path, name: &str, value: &Value) -> PathBuf {
    let p = root.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

pub fn cube_scene() -> Value {
    json!({"objects": [{"shape": "primitive", "kind": "cube", "size": 0.5,
        "pose": {"translation": {"x": 8.0, "y": 0.0, "z": 0.0}, "yaw": 0.0}, "vertices": 386}]})
}

/// Run every subcommand twice, the second time from the first run's
/// manifest, and report per command whether the outputs are byte-identical.
pub fn commands_reproduce(root: &Path, weights: &Path) -> Vec<(String, bool)> {
    let mut results = Vec::new();
    let check = |name: &str, sub: &str, args: &[&str]| (name.to_string(), reproduces(root, name, sub, args));
    let w = weights.to_str().unwrap();

    results.push(check("synth", "synth", &["--count", "12", "--seed", "4"]));

    let small = write_config(root, "small.json", &json!({"synth": {"count": 6}, "holdout": 2, "train": {"epochs": 2}}));
    results.push(check("train", "train", &["--config", small.to_str().unwrap()]));

    let scene = write_config(root, "scene.json", &json!({"scene": cube_scene()}));
    results.push(check("render", "render", &["--config", scene.to_str().unwrap()]));
    results.push(check("detect", "detect", &["--config", scene.to_str().unwrap(), "--weights", w]));

    results.push(check("attack", "attack", &["--weights", w, "--iters", "20", "--seed", "2"]));
    let evo = write_config(root, "evo.json", &json!({"evolution": {"offspring": 12, "survivors": 2}}));
    results.push(check("evolve", "evolve", &["--config", evo.to_str().unwrap(), "--weights", w, "--generations", "2"]));

    let adv = root.join("attack-a").join("adversarial.obj");
    let eval = write_config(
        root,
        "eval.json",
        &json!({"eval": {"bands": [{"name": "near", "distance": [0.0, 0.5], "yaw": [0.0, 5.0], "count": 6}]}}),
    );
    results.push(check("evaluate", "evaluate", &["--config", eval.to_str().unwrap(), "--weights", w, "--mesh", adv.to_str().unwrap()]));
    results.push(check("export", "export", &["--mesh", adv.to_str().unwrap()]));
    results
}

/// How many of 100 random 1000-point clouds that sum to N within 1e-6·N.
pub fn partition_of_unity_rate(seed: u64) -> usize {
    let spec = GridSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..100)
        .filter(|_| {
            let cloud = interior_cloud(&mut rng, 1000, &spec);
            let total = soft_count(&cloud, &spec, &ProxyConfig::trilinear()).total_mass();
            (total - 1000.0).abs() <= 1e-6 * 1000.0
        })
        .count()
}

/// A point on a lattice node gives that node weight exactly 1.
pub fn lattice_points_are_exact() -> bool {
    // Grids whose lattice coordinates are exact in binary.
    for (spec, (r, c, p)) in [(GridSpec::default(), (37usize, 90usize, 0usize)), (small_spec(), (5, 7, 3))] {
        let pos = Vec3::new(
            spec.origin.x + r as f64 * spec.cell_size,
            spec.origin.y + c as f64 * spec.cell_size,
            spec.slab_level(p),
        );
        let g = soft_count(&PointCloud::new(vec![CloudPoint::new(pos, 0.3)]), &spec, &ProxyConfig::trilinear());
        if g.mass_at(r, c, p) != 1.0 || g.total_mass() != 1.0 {
            return false;
        }
    }
    true
}
