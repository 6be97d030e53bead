use crate::detector::{forward, forward_region, ModelOutput};
use crate::error::Result;
use crate::features::{hard_features, roi_filter, FeatureMap, Region};
use crate::geometry::TriangleMesh;
use crate::lidar_sim::{render_scene, DEFAULT_OBJECT_INTENSITY};
use crate::postprocess::{obstacles_from_output, Obstacle};

use super::AttackScene;

/// Hard-pipeline result for one query.
#[derive(Clone, Debug)]
pub struct VictimView {
    pub output: ModelOutput,
    pub obstacles: Vec<Obstacle>,
}

/// Hard pipeline that caches the background-only features and output and
/// only re-runs the detector where the object changed the feature map.
/// Results are bit-identical to [`crate::postprocess::detect`].
pub struct Victim<'a> {
    scene: &'a AttackScene,
    base_features: FeatureMap,
    base_output: ModelOutput,
}

impl<'a> Victim<'a> {
    pub fn new(scene: &'a AttackScene) -> Result<Self> {
        let base_features = hard_features(&roi_filter(&scene.background, &scene.spec), &scene.spec);
        let base_output = forward(&scene.params, &base_features)?;
        Ok(Victim { scene, base_features, base_output })
    }

    pub fn scene(&self) -> &AttackScene {
        self.scene
    }

    /// Detect with `posed` (world-frame mesh) composited onto the background.
    pub fn evaluate(&self, posed: Option<&TriangleMesh>) -> Result<VictimView> {
        let spec = &self.scene.spec;
        let Some(mesh) = posed else {
            let roi = roi_filter(&self.scene.background, spec);
            let obstacles = obstacles_from_output(&self.base_output, &roi, spec)?;
            return Ok(VictimView { output: self.base_output.clone(), obstacles });
        };
        let cloud = render_scene(mesh, &self.scene.background, &self.scene.rays, DEFAULT_OBJECT_INTENSITY).merged();
        let roi = roi_filter(&cloud, spec);
        let features = hard_features(&roi, spec);
        let mut output = self.base_output.clone();
        if let Some(changed) = changed_cells(&self.base_features, &features) {
            let region = changed.dilate(2, spec.rows, spec.cols);
            let patch = forward_region(&self.scene.params, &features, region)?;
            output.splice(&patch, &region);
        }
        let obstacles = obstacles_from_output(&output, &roi, spec)?;
        Ok(VictimView { output, obstacles })
    }
}

/// Bounding block of the cells whose features differ bitwise.
fn changed_cells(a: &FeatureMap, b: &FeatureMap) -> Option<Region> {
    let mut bounds: Option<Region> = None;
    for r in 0..a.rows {
        for c in 0..a.cols {
            let same = a.cell(r, c).iter().zip(b.cell(r, c)).all(|(x, y)| x.to_bits() == y.to_bits());
            if same {
                continue;
            }
            bounds = Some(match bounds {
                None => Region { r0: r, r1: r + 1, c0: c, c1: c + 1 },
                Some(g) => Region { r0: g.r0.min(r), r1: g.r1.max(r + 1), c0: g.c0.min(c), c1: g.c1.max(c + 1) },
            });
        }
    }
    bounds
}
