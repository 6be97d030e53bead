//! Gradient attack through the renderer, the proxy aggregation and the detector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{backward_region, forward_traced};
use crate::error::{Error, Result};
use crate::features::{roi_filter, soft_count_backward, soft_count_region, soft_features, soft_features_backward, ProxyConfig, Region};
use crate::geometry::{l2_loss, laplacian_loss, Displacement, Pose, RigidTransform, TriangleMesh, Vec3};
use crate::lidar_sim::{hit_backward, render_scene, CloudPoint, PointCloud, DEFAULT_OBJECT_INTENSITY};

use super::loss::{adv_loss, goal_success};
use super::{build_mask, object_size, AttackGoal, AttackResult, AttackScene, Mask, Method, Victim};

pub const DEFAULT_LAMBDA: f64 = 0.003;
pub const DEFAULT_BETA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Regularizer weight.
    pub lambda: f64,
    /// L2 weight inside the regularizer.
    pub beta: f64,
    pub proxy: ProxyConfig,
    pub lr: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Victim set: world poses of the object.
    pub victim_set: Vec<Pose>,
    /// Hard-pipeline scoring period in iterations.
    pub eval_every: usize,
    /// Victim sets up to this size are used whole every iteration.
    pub eot_full_max: usize,
    /// Poses sampled per iteration for larger victim sets.
    pub eot_batch: usize,
    /// Treat the positiveness factor of the relabel loss as a constant.
    pub freeze_pos: bool,
    pub stop_on_success: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            lambda: DEFAULT_LAMBDA,
            beta: DEFAULT_BETA,
            proxy: ProxyConfig::default(),
            lr: 0.01,
            max_iters: 2000,
            seed: 0,
            victim_set: vec![Pose::new(Vec3::new(8.0, 0.0, 0.0), 0.0)],
            eval_every: 50,
            eot_full_max: 16,
            eot_batch: 8,
            freeze_pos: true,
            stop_on_success: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.beta > 0.0 && self.lr > 0.0) {
            return Err(Error::Config("lambda, beta and lr must be positive".into()));
        }
        if self.victim_set.is_empty() {
            return Err(Error::Config("victim set is empty".into()));
        }
        if self.eval_every == 0 || self.eot_batch == 0 {
            return Err(Error::Config("eval_every and eot_batch must be positive".into()));
        }
        Ok(())
    }
}

/// The 45-pose grid: offsets `{0, ±0.5 m}²` × yaw offsets `{0, ±2.5°, ±5°}` around `center`.
pub fn controlled_poses(center: &Pose) -> Vec<Pose> {
    let mut poses = Vec::with_capacity(45);
    for dx in [0.0, -0.5, 0.5] {
        for dy in [0.0, -0.5, 0.5] {
            for dyaw in [0.0, -2.5, 2.5, -5.0, 5.0] {
                poses.push(center.offset(Vec3::new(dx, dy, 0.0), dyaw));
            }
        }
    }
    poses
}

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(x.len(), grad.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            x[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Loss value with its parts and the gradient w.r.t. the displacement.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub value: f64,
    /// Mean adversarial loss over the evaluated poses.
    pub adversarial: f64,
    pub laplacian: f64,
    pub l2: f64,
    pub grad: Vec<Vec3>,
}

/// Per-pose quantities that do not depend on the displacement.
pub(crate) struct PoseContext {
    pub pose: Pose,
    pub transform: RigidTransform,
    pub mask: Mask,
    feature_region: Region,
    /// Background points whose stencil can reach the feature region.
    near_background: Vec<usize>,
}

impl PoseContext {
    pub fn new(benign: &TriangleMesh, pose: Pose, scene: &AttackScene) -> Result<Self> {
        let spec = &scene.spec;
        let mask = build_mask(benign, &pose, spec)?;
        let feature_region = mask.region.dilate(2, spec.rows, spec.cols);
        let cs = spec.cell_size;
        let (x0, x1) = (spec.origin.x + (feature_region.r0 as f64 - 1.0) * cs, spec.origin.x + (feature_region.r1 as f64 + 1.0) * cs);
        let (y0, y1) = (spec.origin.y + (feature_region.c0 as f64 - 1.0) * cs, spec.origin.y + (feature_region.c1 as f64 + 1.0) * cs);
        let near_background = scene
            .background
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.position.x >= x0 && p.position.x <= x1 && p.position.y >= y0 && p.position.y <= y1)
            .map(|(i, _)| i)
            .collect();
        Ok(PoseContext { pose, transform: pose.transform_about(Vec3::ZERO), mask, feature_region, near_background })
    }

    pub fn posed(&self, benign: &TriangleMesh, disp: &[Vec3]) -> TriangleMesh {
        benign.with_vertices(
            benign.vertices().iter().zip(disp).map(|(v, d)| self.transform.apply(*v + *d)).collect(),
        )
    }
}

/// Adversarial loss at one pose and its gradient w.r.t. the object-frame displacement.
fn pose_loss(
    benign: &TriangleMesh,
    disp: &[Vec3],
    ctx: &PoseContext,
    scene: &AttackScene,
    goal: &AttackGoal,
    cfg: &AttackConfig,
) -> Result<(f64, Vec<Vec3>)> {
    let spec = &scene.spec;
    let mesh = ctx.posed(benign, disp);
    let scan = render_scene(&mesh, &scene.background, &scene.rays, DEFAULT_OBJECT_INTENSITY);

    // Foreground points first so their indices line up with `hits`.
    let mut fg_hits = Vec::new();
    let mut points: Vec<CloudPoint> = Vec::new();
    for (p, hit) in scan.foreground.points.iter().zip(&scan.hits) {
        if spec.roi.contains(p.position.x, p.position.y) {
            points.push(*p);
            fg_hits.push(*hit);
        }
    }
    let n_fg = points.len();
    let near_kept = ctx.near_background.iter().filter(|i| scan.occluded_indices.binary_search(i).is_err());
    let near = PointCloud::new(near_kept.map(|&i| scene.background.points[i]).collect());
    points.extend(roi_filter(&near, spec).points);
    let cloud = PointCloud::new(points);

    let grid = soft_count_region(&cloud, spec, &cfg.proxy, ctx.feature_region);
    let x = soft_features(&grid, spec, &cfg.proxy);
    let (output, trace) = forward_traced(&scene.params, &x, ctx.mask.region)?;
    let (value, adjoint) = adv_loss(&output, &ctx.mask, goal, cfg.freeze_pos);
    let dx = backward_region(&scene.params, &trace, &output, &adjoint);
    let dgrid = soft_features_backward(&grid, spec, &cfg.proxy, &dx);
    let fg_cloud = PointCloud::new(cloud.points[..n_fg].to_vec());
    let dpoints = soft_count_backward(&fg_cloud, spec, &cfg.proxy, &dgrid);

    let mut grad = vec![Vec3::ZERO; benign.vertex_count()];
    for (hit, dp) in fg_hits.iter().zip(&dpoints) {
        if *dp == Vec3::ZERO {
            continue;
        }
        let hg = hit_backward(hit, &mesh, scene.rays.directions[hit.ray], *dp);
        for (v, g) in hg.vertices.iter().zip(hg.grads) {
            grad[*v] += ctx.transform.pullback(g);
        }
    }
    Ok((value, grad))
}

fn regularizer(benign: &TriangleMesh, disp: &[Vec3], beta: f64) -> (f64, f64, Vec<Vec3>) {
    let (lap, lap_grad) = laplacian_loss(disp, benign.adjacency());
    let (l2, l2_grad) = l2_loss(disp);
    let grad = lap_grad.iter().zip(&l2_grad).map(|(a, b)| *a + *b * beta).collect();
    (lap, l2, grad)
}

fn loss_on_contexts(
    benign: &TriangleMesh,
    disp: &[Vec3],
    contexts: &[&PoseContext],
    scene: &AttackScene,
    goal: &AttackGoal,
    cfg: &AttackConfig,
) -> Result<LossEval> {
    let per_pose: Vec<(f64, Vec<Vec3>)> = contexts
        .par_iter()
        .map(|ctx| pose_loss(benign, disp, ctx, scene, goal, cfg))
        .collect::<Result<_>>()?;
    let n = per_pose.len() as f64;
    let mut adversarial = 0.0;
    let mut grad = vec![Vec3::ZERO; benign.vertex_count()];
    for (v, g) in &per_pose {
        adversarial += v / n;
        for (acc, gi) in grad.iter_mut().zip(g) {
            *acc += *gi / n;
        }
    }
    let (laplacian, l2, reg_grad) = regularizer(benign, disp, cfg.beta);
    for (acc, r) in grad.iter_mut().zip(reg_grad) {
        *acc += r * cfg.lambda;
    }
    Ok(LossEval { value: adversarial + cfg.lambda * (laplacian + cfg.beta * l2), adversarial, laplacian, l2, grad })
}

/// `mean_poses L_adv + λ (laplacian + β·l2)` through the proxy pipeline, with
/// its gradient w.r.t. the object-frame displacement.
pub fn total_loss(
    benign: &TriangleMesh,
    disp: &[Vec3],
    poses: &[Pose],
    scene: &AttackScene,
    goal: &AttackGoal,
    cfg: &AttackConfig,
) -> Result<LossEval> {
    if disp.len() != benign.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "displacement has {} entries for {} vertices",
            disp.len(),
            benign.vertex_count()
        )));
    }
    let contexts = poses.iter().map(|p| PoseContext::new(benign, *p, scene)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&PoseContext> = contexts.iter().collect();
    loss_on_contexts(benign, disp, &refs, scene, goal, cfg)
}

/// Hard-pipeline score of one displacement over the victim set.
#[derive(Clone, Debug)]
pub(crate) struct HardScore {
    pub success: Vec<bool>,
    pub adversarial: f64,
    pub objective: f64,
}

impl HardScore {
    pub fn count(&self) -> usize {
        self.success.iter().filter(|s| **s).count()
    }

    /// Ordering key: more successes first, then lower objective.
    pub fn better_than(&self, other: &HardScore) -> bool {
        (self.count(), -self.objective) > (other.count(), -other.objective)
    }
}

pub(crate) fn hard_score(
    benign: &TriangleMesh,
    disp: &[Vec3],
    contexts: &[PoseContext],
    victim: &Victim,
    goal: &AttackGoal,
    lambda: f64,
    beta: f64,
) -> Result<HardScore> {
    let scene = victim.scene();
    let per_pose: Vec<(f64, bool)> = contexts
        .par_iter()
        .map(|ctx| {
            let view = victim.evaluate(Some(&ctx.posed(benign, disp)))?;
            let (loss, _) = adv_loss(&view.output, &ctx.mask, goal, true);
            // Success is judged on the deformed object's own footprint, so
            // pushing geometry out of the benign mask does not count.
            let footprint = build_mask(&benign.displaced(disp), &ctx.pose, &scene.spec)?;
            Ok((loss, goal_success(&view.obstacles, &footprint, &scene.spec, goal)))
        })
        .collect::<Result<_>>()?;
    let adversarial = per_pose.iter().map(|p| p.0).sum::<f64>() / per_pose.len() as f64;
    let (lap, l2, _) = regularizer(benign, disp, beta);
    Ok(HardScore {
        success: per_pose.iter().map(|p| p.1).collect(),
        adversarial,
        objective: adversarial + lambda * (lap + beta * l2),
    })
}

/// Check that the benign object is detected (as the source class for
/// relabeling) at every pose; attacking an undetected object is meaningless.
pub(crate) fn check_precondition(
    benign: &TriangleMesh,
    contexts: &[PoseContext],
    victim: &Victim,
    goal: &AttackGoal,
) -> Result<()> {
    let zeros = vec![Vec3::ZERO; benign.vertex_count()];
    let scene = victim.scene();
    let benign_goal = match *goal {
        AttackGoal::Hide => None,
        AttackGoal::Relabel { source, .. } => Some(source),
    };
    for ctx in contexts {
        let view = victim.evaluate(Some(&ctx.posed(benign, &zeros)))?;
        let overlapping: Vec<usize> = view
            .obstacles
            .iter()
            .filter(|o| super::footprint_overlaps(o, &ctx.mask, &scene.spec))
            .map(|o| o.label)
            .collect();
        let ok = match benign_goal {
            None => !overlapping.is_empty(),
            Some(source) => overlapping.contains(&source),
        };
        if !ok {
            return Err(Error::Config(format!(
                "benign object is not detected{} at pose {:?}",
                if benign_goal.is_some() { " as the source class" } else { "" },
                ctx.pose
            )));
        }
    }
    Ok(())
}

pub(crate) fn finish(
    method: Method,
    goal: AttackGoal,
    benign: &TriangleMesh,
    disp: Vec<Vec3>,
    score: HardScore,
    contexts: &[PoseContext],
    loss_trace: Vec<f64>,
    iterations: usize,
    queries: usize,
    best_iteration: usize,
    seed: u64,
) -> AttackResult {
    let (lap, _) = laplacian_loss(&disp, benign.adjacency());
    let (l2, _) = l2_loss(&disp);
    let displacement = Displacement(disp);
    let max_displacement = displacement.max_norm();
    let success_count = score.count();
    AttackResult {
        method,
        goal,
        mesh: benign.displaced(&displacement.0),
        loss_trace,
        poses: contexts.iter().map(|c| c.pose).collect(),
        success_count,
        success: score.success,
        objective: score.objective,
        adversarial_loss: score.adversarial,
        iterations,
        queries,
        best_iteration,
        final_laplacian: lap,
        final_l2: l2,
        max_displacement,
        displacement_flag: success_count > 0 && max_displacement > 0.2 * object_size(benign),
        displacement,
        seed,
    }
}

/// Optimize a displacement with Adam on the proxy loss, scoring the hard
/// pipeline every `eval_every` iterations and keeping the best candidate.
pub fn run(benign: &TriangleMesh, goal: &AttackGoal, cfg: &AttackConfig, scene: &AttackScene) -> Result<AttackResult> {
    cfg.validate()?;
    goal.validate(scene.params.classes)?;
    let contexts = cfg
        .victim_set
        .iter()
        .map(|p| PoseContext::new(benign, *p, scene))
        .collect::<Result<Vec<_>>>()?;
    let victim = Victim::new(scene)?;
    check_precondition(benign, &contexts, &victim, goal)?;

    let n = benign.vertex_count();
    let mut disp = vec![Vec3::ZERO; n];
    let mut flat = vec![0.0; 3 * n];
    let mut adam = AdamState::new(3 * n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best_score = hard_score(benign, &disp, &contexts, &victim, goal, cfg.lambda, cfg.beta)?;
    let mut best_disp = disp.clone();
    let mut best_iteration = 0;
    let mut queries = 1;
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut iterations = 0;
    let full = contexts.len() <= cfg.eot_full_max;
    for it in 1..=cfg.max_iters {
        let batch: Vec<&PoseContext> = if full {
            contexts.iter().collect()
        } else {
            let mut idx = rand::seq::index::sample(&mut rng, contexts.len(), cfg.eot_batch.min(contexts.len())).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| &contexts[i]).collect()
        };
        let eval = loss_on_contexts(benign, &disp, &batch, scene, goal, cfg)?;
        trace.push(eval.value);
        let grad_flat: Vec<f64> = eval.grad.iter().flat_map(|g| g.to_array()).collect();
        adam.step(&mut flat, &grad_flat, cfg.lr);
        disp = Displacement::from_flat(&flat).0;
        iterations = it;
        if it % cfg.eval_every == 0 || it == cfg.max_iters {
            let score = hard_score(benign, &disp, &contexts, &victim, goal, cfg.lambda, cfg.beta)?;
            queries += 1;
            let done = score.count() == contexts.len();
            if score.better_than(&best_score) {
                best_score = score;
                best_disp = disp.clone();
                best_iteration = it;
            }
            if done && cfg.stop_on_success {
                break;
            }
        }
    }
    Ok(finish(
        Method::Whitebox,
        *goal,
        benign,
        best_disp,
        best_score,
        &contexts,
        trace,
        iterations,
        queries,
        best_iteration,
        cfg.seed,
    ))
}

/// Largest `λ` in `[lo, hi]` (geometric bisection, `steps` halvings) for which
/// the attack still succeeds at every pose, with that run's result. `None`
/// when even `lo` fails.
pub fn bisect_lambda(
    benign: &TriangleMesh,
    goal: &AttackGoal,
    cfg: &AttackConfig,
    scene: &AttackScene,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<Option<(f64, AttackResult)>> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::Config("lambda search needs 0 < lo <= hi".into()));
    }
    let attempt = |lambda: f64| run(benign, goal, &AttackConfig { lambda, ..cfg.clone() }, scene);
    let top = attempt(hi)?;
    if top.fully_successful() {
        return Ok(Some((hi, top)));
    }
    let bottom = attempt(lo)?;
    if !bottom.fully_successful() {
        return Ok(None);
    }
    let (mut good, mut bad, mut best) = (lo, hi, bottom);
    for _ in 0..steps {
        let mid = (good * bad).sqrt();
        let r = attempt(mid)?;
        if r.fully_successful() {
            good = mid;
            best = r;
        } else {
            bad = mid;
        }
    }
    Ok(Some((good, best)))
}
