use crate::lidar_sim::PointCloud;

use super::{channel, FeatureMap, GridSpec};

/// Keep the points whose ground-plane position lies in the ROI rectangle
/// (boundary included).
pub fn roi_filter(cloud: &PointCloud, spec: &GridSpec) -> PointCloud {
    PointCloud::new(
        cloud
            .points
            .iter()
            .filter(|p| spec.roi.contains(p.position.x, p.position.y))
            .copied()
            .collect(),
    )
}

/// Reference aggregation with floor binning. Empty cells carry zeros in the
/// statistic channels; direction and distance depend only on the cell center.
pub fn hard_features(cloud: &PointCloud, spec: &GridSpec) -> FeatureMap {
    let mut map = FeatureMap::with_geometry(spec);
    let n = spec.cells();
    let mut count = vec![0usize; n];
    let mut max_z = vec![f64::NEG_INFINITY; n];
    let mut max_i = vec![0.0; n];
    let mut sum_z = vec![0.0; n];
    let mut sum_i = vec![0.0; n];
    for p in &cloud.points {
        let Some((r, c)) = spec.cell_of(p.position.x, p.position.y) else { continue };
        let k = r * spec.cols + c;
        count[k] += 1;
        sum_z[k] += p.position.z;
        sum_i[k] += p.intensity;
        if p.position.z > max_z[k] {
            max_z[k] = p.position.z;
            max_i[k] = p.intensity;
        }
    }
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let k = r * spec.cols + c;
            if count[k] == 0 {
                continue;
            }
            let nf = count[k] as f64;
            map.set(r, c, channel::MAX_HEIGHT, max_z[k]);
            map.set(r, c, channel::MAX_INTENSITY, max_i[k]);
            map.set(r, c, channel::MEAN_HEIGHT, sum_z[k] / nf);
            map.set(r, c, channel::MEAN_INTENSITY, sum_i[k] / nf);
            map.set(r, c, channel::COUNT, nf);
            map.set(r, c, channel::NON_EMPTY, 1.0);
        }
    }
    map
}
