//! Turns per-cell model output into obstacles: offset-graph clustering,
//! confidence and point-count filtering, class voting and box fitting.

mod boxes;

use serde::{Deserialize, Serialize};

use crate::detector::{forward, DetectorParams, ModelOutput};
use crate::error::{Error, Result};
use crate::features::{hard_features, roi_filter, GridSpec};
use crate::geometry::{TriangleMesh, Vec3};
use crate::lidar_sim::{render_scene, PointCloud, RayBundle, DEFAULT_OBJECT_INTENSITY};

pub use boxes::{min_area_rect, BoundingBox, Rect2};

/// Cells with objectness above this become graph nodes.
pub const OBJECTNESS_GATE: f64 = 0.5;
/// Clusters need mean positiveness above this.
pub const CONFIDENCE_GATE: f64 = 0.1;
/// Clusters need more than this many assigned points.
pub const MIN_POINTS_EXCLUSIVE: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Member cells in row-major order.
    pub cells: Vec<(usize, usize)>,
    pub mean_positiveness: f64,
    pub class_sums: Vec<f64>,
    /// Indices into the ROI cloud, ascending.
    pub points: Vec<usize>,
}

/// A cluster that passed the filters, with its vote.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub cluster: Cluster,
    pub label: usize,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub label: usize,
    pub confidence: f64,
    pub bbox: BoundingBox,
    pub cell_count: usize,
    pub point_count: usize,
    #[serde(skip)]
    pub cells: Vec<(usize, usize)>,
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index stays root so labels are order independent.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Weakly connected components of the center-offset graph over gated cells.
///
/// Each gated cell links to the cell its rounded offset points at, when that
/// cell is inside the grid and gated too. Clusters come out ordered by their
/// first cell in row-major order.
pub fn cluster(output: &ModelOutput, roi_cloud: &PointCloud, spec: &GridSpec) -> Result<Vec<Cluster>> {
    if output.rows != spec.rows || output.cols != spec.cols {
        return Err(Error::InvalidInput(format!(
            "output is {}×{}, grid is {}×{}",
            output.rows, output.cols, spec.rows, spec.cols
        )));
    }
    let (rows, cols) = (output.rows, output.cols);
    let gated: Vec<bool> = (0..rows * cols).map(|i| output.objectness(i / cols, i % cols) > OBJECTNESS_GATE).collect();
    let mut sets = DisjointSet((0..rows * cols).collect());
    for i in (0..rows * cols).filter(|&i| gated[i]) {
        let (r, c) = (i / cols, i % cols);
        let (dr, dc) = output.offset(r, c);
        let tr = r as f64 + dr.round();
        let tc = c as f64 + dc.round();
        if tr < 0.0 || tc < 0.0 || tr >= rows as f64 || tc >= cols as f64 {
            continue;
        }
        let j = tr as usize * cols + tc as usize;
        if gated[j] {
            sets.union(i, j);
        }
    }
    let mut index_of_root = vec![usize::MAX; rows * cols];
    let mut clusters: Vec<Cluster> = Vec::new();
    for i in (0..rows * cols).filter(|&i| gated[i]) {
        let root = sets.find(i);
        if index_of_root[root] == usize::MAX {
            index_of_root[root] = clusters.len();
            clusters.push(Cluster {
                cells: Vec::new(),
                mean_positiveness: 0.0,
                class_sums: vec![0.0; output.classes],
                points: Vec::new(),
            });
        }
        let cl = &mut clusters[index_of_root[root]];
        let (r, c) = (i / cols, i % cols);
        cl.cells.push((r, c));
        cl.mean_positiveness += output.positiveness(r, c);
        for (s, p) in cl.class_sums.iter_mut().zip(output.class_probs(r, c)) {
            *s += p;
        }
    }
    for cl in &mut clusters {
        cl.mean_positiveness /= cl.cells.len() as f64;
    }
    for (k, p) in roi_cloud.points.iter().enumerate() {
        if let Some((r, c)) = spec.cell_of(p.position.x, p.position.y) {
            let i = r * cols + c;
            if gated[i] {
                clusters[index_of_root[sets.find(i)]].points.push(k);
            }
        }
    }
    Ok(clusters)
}

/// Keep clusters with mean positiveness above 0.1 and more than three
/// points; label each by the argmax of its summed class probabilities.
pub fn filter_and_classify(clusters: Vec<Cluster>) -> Vec<Candidate> {
    clusters
        .into_iter()
        .filter(|cl| cl.mean_positiveness > CONFIDENCE_GATE && cl.points.len() > MIN_POINTS_EXCLUSIVE)
        .map(|cl| {
            let label = argmax(&cl.class_sums);
            let confidence = cl.mean_positiveness;
            Candidate { cluster: cl, label, confidence }
        })
        .collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Minimum-area ground rectangle over the candidate's points, with vertical
/// extent from their heights.
pub fn build_box(candidate: &Candidate, roi_cloud: &PointCloud, spec: &GridSpec) -> Result<Obstacle> {
    let pts: Vec<Vec3> = candidate.cluster.points.iter().map(|&k| roi_cloud.points[k].position).collect();
    if pts.len() <= MIN_POINTS_EXCLUSIVE {
        return Err(Error::InvalidArgument(format!("box needs at least 4 points, got {}", pts.len())));
    }
    let bbox = BoundingBox::fit(&pts, spec.cell_size);
    Ok(Obstacle {
        label: candidate.label,
        confidence: candidate.confidence,
        bbox,
        cell_count: candidate.cluster.cells.len(),
        point_count: pts.len(),
        cells: candidate.cluster.cells.clone(),
    })
}

/// Cluster, filter and box an already computed model output.
pub fn obstacles_from_output(output: &ModelOutput, roi_cloud: &PointCloud, spec: &GridSpec) -> Result<Vec<Obstacle>> {
    let candidates = filter_and_classify(cluster(output, roi_cloud, spec)?);
    let obstacles = candidates
        .iter()
        .map(|c| build_box(c, roi_cloud, spec))
        .collect::<Result<Vec<_>>>()?;
    debug_assert!(obstacles.iter().all(|o| o.confidence > CONFIDENCE_GATE
        && o.point_count > MIN_POINTS_EXCLUSIVE
        && o.cells.iter().all(|&(r, c)| output.objectness(r, c) > OBJECTNESS_GATE)));
    Ok(obstacles)
}

/// Detect obstacles in a full point cloud with the hard feature pipeline.
pub fn detect_cloud(cloud: &PointCloud, spec: &GridSpec, params: &DetectorParams) -> Result<Vec<Obstacle>> {
    let roi = roi_filter(cloud, spec);
    let output = forward(params, &hard_features(&roi, spec))?;
    obstacles_from_output(&output, &roi, spec)
}

/// Render an optional mesh into the background and run the victim pipeline.
pub fn detect(
    mesh: Option<&TriangleMesh>,
    background: &PointCloud,
    rays: &RayBundle,
    spec: &GridSpec,
    params: &DetectorParams,
) -> Result<Vec<Obstacle>> {
    match mesh {
        Some(m) => detect_cloud(&render_scene(m, background, rays, DEFAULT_OBJECT_INTENSITY).merged(), spec, params),
        None => detect_cloud(background, spec, params),
    }
}

/// JSON detection report.
pub fn report_json(obstacles: &[Obstacle]) -> String {
    serde_json::to_string_pretty(obstacles).expect("obstacles serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DEFAULT_CLASSES;
    use crate::lidar_sim::CloudPoint;

    fn small_spec() -> GridSpec {
        GridSpec { rows: 16, cols: 16, ..GridSpec::default() }
    }

    fn set_cell(o: &mut ModelOutput, r: usize, c: usize, obj: f64, pos: f64, off: (f64, f64), cls: usize) {
        let cell = o.cell_mut(r, c);
        cell[0] = off.0;
        cell[1] = off.1;
        cell[2] = obj;
        cell[3] = pos;
        for k in 0..DEFAULT_CLASSES {
            cell[5 + k] = if k == cls { 0.7 } else { 0.1 };
        }
    }

    fn points_in(spec: &GridSpec, cells: &[(usize, usize)], per_cell: usize) -> PointCloud {
        let mut pts = Vec::new();
        for &(r, c) in cells {
            let (x, y) = spec.cell_center(r, c);
            for k in 0..per_cell {
                pts.push(CloudPoint::new(Vec3::new(x + 0.01 * k as f64, y - 0.01 * k as f64, 0.1 * k as f64), 0.5));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn nothing_gated_gives_no_clusters() {
        let spec = small_spec();
        let mut o = ModelOutput::zeros(16, 16, DEFAULT_CLASSES);
        set_cell(&mut o, 3, 3, 0.5, 0.9, (0.0, 0.0), 0);
        assert!(cluster(&o, &PointCloud::default(), &spec).unwrap().is_empty());
    }

    #[test]
    fn block_pointing_to_corner_is_one_cluster() {
        let spec = small_spec();
        let mut o = ModelOutput::zeros(16, 16, DEFAULT_CLASSES);
        for (r, c) in [(4, 4), (4, 5), (5, 4), (5, 5)] {
            set_cell(&mut o, r, c, 0.9, 0.9, (4.0 - r as f64, 4.0 - c as f64), 1);
        }
        let cl = cluster(&o, &PointCloud::default(), &spec).unwrap();
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].cells.len(), 4);
    }

    #[test]
    fn separate_blocks_are_separate_clusters_and_partition_cells() {
        let spec = small_spec();
        let mut o = ModelOutput::zeros(16, 16, DEFAULT_CLASSES);
        for (r0, c0) in [(2usize, 2usize), (2, 12)] {
            for (r, c) in [(r0, c0), (r0, c0 + 1), (r0 + 1, c0), (r0 + 1, c0 + 1)] {
                set_cell(&mut o, r, c, 0.9, 0.9, (r0 as f64 - r as f64, c0 as f64 - c as f64), 0);
            }
        }
        let cl = cluster(&o, &PointCloud::default(), &spec).unwrap();
        assert_eq!(cl.len(), 2);
        let mut all: Vec<_> = cl.iter().flat_map(|c| c.cells.clone()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 8);
    }

    #[test]
    fn filters_on_confidence_and_point_count() {
        let spec = small_spec();
        let cells = [(4usize, 4usize)];
        let mut o = ModelOutput::zeros(16, 16, DEFAULT_CLASSES);
        set_cell(&mut o, 4, 4, 0.9, 0.05, (0.0, 0.0), 0);
        let cl = cluster(&o, &points_in(&spec, &cells, 6), &spec).unwrap();
        assert!(filter_and_classify(cl).is_empty());

        set_cell(&mut o, 4, 4, 0.9, 0.8, (0.0, 0.0), 1);
        let three = cluster(&o, &points_in(&spec, &cells, 3), &spec).unwrap();
        assert!(filter_and_classify(three).is_empty());
        let four = cluster(&o, &points_in(&spec, &cells, 4), &spec).unwrap();
        let kept = filter_and_classify(four);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].label, 1);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let o = ModelOutput::zeros(8, 8, DEFAULT_CLASSES);
        assert!(cluster(&o, &PointCloud::default(), &small_spec()).is_err());
    }
}
