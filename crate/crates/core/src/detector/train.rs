use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, Region, CHANNELS};

use super::model::{backward_logits, forward_traced, out, softmax, Patch};
use super::{forward, DetectorParams};

/// Supervision for one grid cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellTarget {
    /// 1 for cells under an object footprint, else 0. Also the positiveness target.
    pub objectness: f64,
    /// Center-offset target in cells; see `workbench::offset_target` for the rule.
    pub offset: (f64, f64),
    pub height: f64,
    pub class: Option<usize>,
}

/// A feature map with per-cell targets.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScene {
    pub features: FeatureMap,
    /// Row-major, one per cell.
    pub targets: Vec<CellTarget>,
    /// Footprint cell blocks of the objects in the scene.
    pub objects: Vec<Region>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub classes: usize,
    pub batch_size: usize,
    /// Side of the square output crops the loss is evaluated on.
    pub crop: usize,
    /// Crops around each labeled object per epoch.
    pub object_crops: usize,
    /// Extra randomly placed crops per scene and epoch.
    pub random_crops: usize,
    /// Final learning rate as a fraction of `lr` (cosine schedule).
    pub final_lr_fraction: f64,
    /// Weight of the center-offset term relative to the other losses.
    pub offset_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 3e-3,
            seed: 1,
            classes: 4,
            batch_size: 8,
            crop: 16,
            object_crops: 3,
            random_crops: 1,
            final_lr_fraction: 0.1,
            offset_weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean total loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub final_objectness: f64,
    pub final_positiveness: f64,
    pub final_offset: f64,
    pub final_height: f64,
    pub final_class: f64,
}

#[derive(Default, Clone, Copy)]
struct LossParts {
    obj: f64,
    pos: f64,
    off: f64,
    hei: f64,
    cls: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn smooth_l1(d: f64) -> (f64, f64) {
    if d.abs() < 1.0 {
        (0.5 * d * d, d)
    } else {
        (d.abs() - 0.5, d.signum())
    }
}

/// Loss on a crop and its gradient w.r.t. the logits.
fn crop_loss(params: &DetectorParams, scene: &LabeledScene, region: Region, logits: &Patch, offset_weight: f64) -> (LossParts, Patch) {
    let k = params.out_channels();
    let mut d = Patch { region, ch: k, data: vec![0.0; region.len() * k] };
    let n_cells = region.len() as f64;
    let n_obj = region
        .cells()
        .filter(|&(r, c)| scene.targets[r * scene.features.cols + c].objectness > 0.5)
        .count()
        .max(1) as f64;
    let mut parts = LossParts::default();
    let mut probs = vec![0.0; params.classes];
    for (r, c) in region.cells() {
        let t = scene.targets[r * scene.features.cols + c];
        let o = region.offset(r, c) * k;
        let z = &logits.data[o..o + k];
        let g = &mut d.data[o..o + k];
        for (ch, acc) in [(out::OBJ, &mut parts.obj), (out::POS, &mut parts.pos)] {
            *acc += (softplus(z[ch]) - t.objectness * z[ch]) / n_cells;
            g[ch] = (sigmoid(z[ch]) - t.objectness) / n_cells;
        }
        if t.objectness > 0.5 {
            for (ch, target) in [(out::OFF_R, t.offset.0), (out::OFF_C, t.offset.1)] {
                let (l, dl) = smooth_l1(z[ch] - target);
                parts.off += offset_weight * l / n_obj;
                g[ch] = offset_weight * dl / n_obj;
            }
            let (l, dl) = smooth_l1(z[out::HEIGHT] - t.height);
            parts.hei += l / n_obj;
            g[out::HEIGHT] = dl / n_obj;
            if let Some(cls) = t.class {
                softmax(&z[out::CLASS0..], &mut probs);
                parts.cls += -probs[cls].max(1e-300).ln() / n_obj;
                for j in 0..params.classes {
                    let y = if j == cls { 1.0 } else { 0.0 };
                    g[out::CLASS0 + j] = (probs[j] - y) / n_obj;
                }
            }
        }
    }
    (parts, d)
}

fn normalization(scenes: &[LabeledScene]) -> ([f64; CHANNELS], [f64; CHANNELS]) {
    let mut sum = [0.0; CHANNELS];
    let mut sq = [0.0; CHANNELS];
    let mut n = 0.0;
    for s in scenes {
        for cell in s.features.data.chunks_exact(CHANNELS) {
            for ch in 0..CHANNELS {
                sum[ch] += cell[ch];
                sq[ch] += cell[ch] * cell[ch];
            }
            n += 1.0;
        }
    }
    let mut shift = [0.0; CHANNELS];
    let mut scale = [1.0; CHANNELS];
    for ch in 0..CHANNELS {
        let mean = sum[ch] / n;
        let var = (sq[ch] / n - mean * mean).max(0.0);
        shift[ch] = mean;
        scale[ch] = 1.0 / var.sqrt().max(1e-3);
    }
    (shift, scale)
}

fn crop_around(rows: usize, cols: usize, size: usize, center: (i64, i64)) -> Region {
    let size_r = size.min(rows);
    let size_c = size.min(cols);
    let r0 = (center.0 - size_r as i64 / 2).clamp(0, (rows - size_r) as i64) as usize;
    let c0 = (center.1 - size_c as i64 / 2).clamp(0, (cols - size_c) as i64) as usize;
    Region { r0, r1: r0 + size_r, c0, c1: c0 + size_c }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut DetectorParams, grads: &DetectorParams, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for ((p, g), (m, v)) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.len() {
                m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
            }
        }
    }
}

/// Train a detector with Adam on object-centered and random crops.
///
/// Deterministic given `cfg.seed`: the crop schedule and the initialization
/// both derive from it, and gradients are accumulated in a fixed order.
pub fn train(scenes: &[LabeledScene], cfg: &TrainConfig) -> Result<(DetectorParams, TrainReport)> {
    if scenes.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one scene".into()));
    }
    let mut params = DetectorParams::init(cfg.classes, cfg.seed);
    let mut report = TrainReport::default();
    if cfg.epochs == 0 {
        return Ok((params, report));
    }
    let (shift, scale) = normalization(scenes);
    params.input_shift = shift;
    params.input_scale = scale;
    let mut adam = Adam {
        m: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        v: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        t: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a1e);
    let batch = cfg.batch_size.max(1);
    let mut last = LossParts::default();
    for epoch in 0..cfg.epochs {
        let progress = epoch as f64 / cfg.epochs as f64;
        let lr = cfg.lr * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        let mut samples: Vec<(usize, Region)> = Vec::new();
        for (si, s) in scenes.iter().enumerate() {
            let (rows, cols) = (s.features.rows, s.features.cols);
            let jitter = (cfg.crop / 4) as i64;
            for obj in s.objects.iter().flat_map(|o| std::iter::repeat(o).take(cfg.object_crops)) {
                let center = (
                    ((obj.r0 + obj.r1) / 2) as i64 + rng.gen_range(-jitter..=jitter),
                    ((obj.c0 + obj.c1) / 2) as i64 + rng.gen_range(-jitter..=jitter),
                );
                samples.push((si, crop_around(rows, cols, cfg.crop, center)));
            }
            for _ in 0..cfg.random_crops {
                let center = (rng.gen_range(0..rows as i64), rng.gen_range(0..cols as i64));
                samples.push((si, crop_around(rows, cols, cfg.crop, center)));
            }
        }
        samples.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        let mut epoch_parts = LossParts::default();
        for chunk in samples.chunks(batch) {
            let mut grads = params.zeros_like();
            for &(si, region) in chunk {
                let scene = &scenes[si];
                let (_, trace) = forward_traced(&params, &scene.features, region)?;
                let (parts, mut d_logits) = crop_loss(&params, scene, region, &trace.logits, cfg.offset_weight);
                for v in d_logits.data.iter_mut() {
                    *v /= chunk.len() as f64;
                }
                backward_logits(
                    &params,
                    &trace,
                    &d_logits,
                    scene.features.rows,
                    scene.features.cols,
                    Some(&mut grads),
                    false,
                );
                epoch_total += parts.obj + parts.pos + parts.off + parts.hei + parts.cls;
                epoch_parts.obj += parts.obj;
                epoch_parts.pos += parts.pos;
                epoch_parts.off += parts.off;
                epoch_parts.hei += parts.hei;
                epoch_parts.cls += parts.cls;
            }
            adam.step(&mut params, &grads, lr);
        }
        let n = samples.len().max(1) as f64;
        report.epoch_loss.push(epoch_total / n);
        last = LossParts {
            obj: epoch_parts.obj / n,
            pos: epoch_parts.pos / n,
            off: epoch_parts.off / n,
            hei: epoch_parts.hei / n,
            cls: epoch_parts.cls / n,
        };
    }
    report.final_objectness = last.obj;
    report.final_positiveness = last.pos;
    report.final_offset = last.off;
    report.final_height = last.hei;
    report.final_class = last.cls;
    params.metadata = serde_json::json!({
        "epochs": cfg.epochs,
        "lr": cfg.lr,
        "seed": cfg.seed,
        "batch_size": cfg.batch_size,
        "crop": cfg.crop,
        "object_crops": cfg.object_crops,
        "random_crops": cfg.random_crops,
        "final_lr_fraction": cfg.final_lr_fraction,
        "offset_weight": cfg.offset_weight,
        "scenes": scenes.len(),
        "final_loss": report.epoch_loss.last(),
    });
    Ok((params, report))
}

/// Fraction of cells whose thresholded objectness matches the target.
pub fn objectness_accuracy(params: &DetectorParams, scenes: &[LabeledScene]) -> Result<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for s in scenes {
        let o = forward(params, &s.features)?;
        for (i, t) in s.targets.iter().enumerate() {
            let (r, c) = (i / o.cols, i % o.cols);
            hit += usize::from((o.objectness(r, c) > 0.5) == (t.objectness > 0.5));
            total += 1;
        }
    }
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_scene(rows: usize, cols: usize, obj: Region) -> LabeledScene {
        let mut features = FeatureMap::zeros(rows, cols);
        let mut targets = vec![CellTarget::default(); rows * cols];
        for (r, c) in obj.cells() {
            features.set(r, c, crate::features::channel::COUNT, 3.0);
            features.set(r, c, crate::features::channel::MAX_HEIGHT, 0.5);
            targets[r * cols + c] = CellTarget { objectness: 1.0, offset: (0.0, 0.0), height: 0.5, class: Some(0) };
        }
        LabeledScene { features, targets, objects: vec![obj] }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let s = toy_scene(12, 12, Region { r0: 4, r1: 6, c0: 4, c1: 6 });
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let (p, _) = train(&[s], &cfg).unwrap();
        assert_eq!(p, DetectorParams::init(4, cfg.seed));
    }

    #[test]
    fn same_seed_same_weights() {
        let s = toy_scene(12, 12, Region { r0: 4, r1: 6, c0: 4, c1: 6 });
        let cfg = TrainConfig { epochs: 3, crop: 8, ..Default::default() };
        let (a, _) = train(&[s.clone()], &cfg).unwrap();
        let (b, _) = train(&[s], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn learns_toy_blob() {
        let s = toy_scene(16, 16, Region { r0: 6, r1: 9, c0: 6, c1: 9 });
        let cfg = TrainConfig { epochs: 150, crop: 12, lr: 1e-2, ..Default::default() };
        let (p, report) = train(&[s.clone()], &cfg).unwrap();
        assert!(report.epoch_loss.last().unwrap() < &report.epoch_loss[0]);
        assert!(objectness_accuracy(&p, &[s]).unwrap() > 0.97);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(train(&[], &TrainConfig::default()).is_err());
    }
}
