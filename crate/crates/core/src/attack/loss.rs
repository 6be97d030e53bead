use crate::detector::ModelOutput;
use crate::features::GridSpec;
use crate::postprocess::{Obstacle, Rect2};

use super::{AttackGoal, Mask};

const POS: usize = 3;
const CLASS0: usize = 5;

/// Sum of positiveness over the mask; the adjoint is 1 on those entries.
pub fn adv_loss_hide(output: &ModelOutput, mask: &Mask) -> (f64, ModelOutput) {
    let mut adj = ModelOutput::zeros(output.rows, output.cols, output.classes);
    let mut value = 0.0;
    for (r, c) in mask.region.cells() {
        value += output.positiveness(r, c);
        adj.cell_mut(r, c)[POS] = 1.0;
    }
    (value, adj)
}

/// `Σ (c_source − c_target) · pos` over the mask. With `freeze_pos` the
/// positiveness factor is a constant weight and receives no adjoint.
pub fn adv_loss_relabel(
    output: &ModelOutput,
    mask: &Mask,
    source: usize,
    target: usize,
    freeze_pos: bool,
) -> (f64, ModelOutput) {
    let mut adj = ModelOutput::zeros(output.rows, output.cols, output.classes);
    let mut value = 0.0;
    for (r, c) in mask.region.cells() {
        let pos = output.positiveness(r, c);
        let probs = output.class_probs(r, c);
        let diff = probs[source] - probs[target];
        value += diff * pos;
        let a = adj.cell_mut(r, c);
        a[CLASS0 + source] = pos;
        a[CLASS0 + target] = -pos;
        if !freeze_pos {
            a[POS] = diff;
        }
    }
    (value, adj)
}

pub fn adv_loss(output: &ModelOutput, mask: &Mask, goal: &AttackGoal, freeze_pos: bool) -> (f64, ModelOutput) {
    match *goal {
        AttackGoal::Hide => adv_loss_hide(output, mask),
        AttackGoal::Relabel { source, target } => adv_loss_relabel(output, mask, source, target, freeze_pos),
    }
}

fn axis_rect_corners(x0: f64, x1: f64, y0: f64, y1: f64) -> [(f64, f64); 4] {
    [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
}

fn separated(a: &[(f64, f64); 4], b: &[(f64, f64); 4], axis: (f64, f64)) -> bool {
    let proj = |pts: &[(f64, f64); 4]| {
        pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let d = p.0 * axis.0 + p.1 * axis.1;
            (lo.min(d), hi.max(d))
        })
    };
    let (a0, a1) = proj(a);
    let (b0, b1) = proj(b);
    a1 < b0 || b1 < a0
}

/// Whether an obstacle's box footprint intersects the masked cells
/// (separating-axis test; touching counts as overlap).
pub fn footprint_overlaps(obstacle: &Obstacle, mask: &Mask, spec: &GridSpec) -> bool {
    let (x0, x1, y0, y1) = mask.world_rect(spec);
    let m = axis_rect_corners(x0, x1, y0, y1);
    let fp: Rect2 = obstacle.bbox.footprint();
    let o = fp.corners();
    let (s, c) = fp.yaw.to_radians().sin_cos();
    let axes = [(1.0, 0.0), (0.0, 1.0), (c, s), (-s, c)];
    !axes.iter().any(|&ax| separated(&m, &o, ax))
}

/// Hide: no obstacle overlaps the mask. Relabel: some overlapping obstacle
/// carries the target label and none carries the source label.
pub fn goal_success(obstacles: &[Obstacle], mask: &Mask, spec: &GridSpec, goal: &AttackGoal) -> bool {
    let mut overlapping = obstacles.iter().filter(|o| footprint_overlaps(o, mask, spec));
    match *goal {
        AttackGoal::Hide => overlapping.next().is_none(),
        AttackGoal::Relabel { source, target } => {
            let labels: Vec<usize> = overlapping.map(|o| o.label).collect();
            labels.contains(&target) && !labels.contains(&source)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Region;
    use crate::postprocess::BoundingBox;

    fn mask_at(r0: usize, c0: usize, n: usize) -> Mask {
        let region = Region { r0, r1: r0 + n, c0, c1: c0 + n };
        Mask { rows: 16, cols: 16, core: region, region }
    }

    #[test]
    fn hide_loss_sums_positiveness() {
        let mut o = ModelOutput::zeros(16, 16, 4);
        let m = mask_at(2, 2, 6);
        assert_eq!(adv_loss_hide(&o, &m).0, 0.0);
        for (r, c) in m.region.cells() {
            o.cell_mut(r, c)[POS] = 0.5;
        }
        let (v, adj) = adv_loss_hide(&o, &m);
        assert!((v - 18.0).abs() < 1e-12);
        assert_eq!(adj.data.iter().filter(|x| **x == 1.0).count(), 36);
    }

    #[test]
    fn relabel_single_cell() {
        let mut o = ModelOutput::zeros(16, 16, 4);
        let m = mask_at(3, 3, 1);
        let cell = o.cell_mut(3, 3);
        cell[POS] = 0.5;
        cell[CLASS0] = 0.8;
        cell[CLASS0 + 1] = 0.1;
        let (v, adj) = adv_loss_relabel(&o, &m, 0, 1, true);
        assert!((v - 0.35).abs() < 1e-12);
        assert_eq!(adj.cell(3, 3)[POS], 0.0);
        let (_, adj) = adv_loss_relabel(&o, &m, 0, 1, false);
        assert!((adj.cell(3, 3)[POS] - 0.7).abs() < 1e-12);
        let cell = o.cell_mut(3, 3);
        cell[CLASS0 + 1] = 0.8;
        assert_eq!(adv_loss_relabel(&o, &m, 0, 1, true).0, 0.0);
    }

    #[test]
    fn rotated_box_overlap() {
        let spec = GridSpec { rows: 16, cols: 16, ..GridSpec::default() };
        let m = mask_at(4, 4, 2);
        let (x0, x1, y0, y1) = m.world_rect(&spec);
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        let ob = |dx: f64, yaw: f64| Obstacle {
            label: 0,
            confidence: 0.9,
            bbox: BoundingBox { cx: cx + dx, cy, cz: 0.0, l: 0.4, w: 0.1, h: 0.1, yaw },
            cell_count: 1,
            point_count: 4,
            cells: vec![],
        };
        assert!(footprint_overlaps(&ob(0.0, 0.0), &m, &spec));
        assert!(!footprint_overlaps(&ob(0.5, 90.0), &m, &spec));
        assert!(footprint_overlaps(&ob(0.3, 0.0), &m, &spec));
    }
}
