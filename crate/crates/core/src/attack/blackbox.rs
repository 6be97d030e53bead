//! Evolution-strategy attack using only hard-pipeline queries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, TriangleMesh, Vec3};

use super::whitebox::{check_precondition, finish, hard_score, HardScore, PoseContext};
use super::{object_size, AttackGoal, AttackResult, AttackScene, Method, Victim, DEFAULT_BETA, DEFAULT_LAMBDA};

/// Object size at which `sigma` is taken literally, in meters.
pub const SIGMA_REFERENCE_SIZE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    /// Per-coordinate noise in meters for a 0.5 m object; scaled with object size.
    pub sigma: f64,
    /// Offspring per generation.
    pub offspring: usize,
    /// Survivors per generation.
    pub survivors: usize,
    pub max_generations: usize,
    pub seed: u64,
    pub lambda: f64,
    pub beta: f64,
    pub victim_set: Vec<Pose>,
    pub stop_on_success: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            sigma: 0.1,
            offspring: 500,
            survivors: 5,
            max_generations: 3,
            seed: 0,
            lambda: DEFAULT_LAMBDA,
            beta: DEFAULT_BETA,
            victim_set: vec![Pose::new(Vec3::new(8.0, 0.0, 0.0), 0.0)],
            stop_on_success: true,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("sigma must be finite and non-negative".into()));
        }
        if self.survivors == 0 || self.offspring < self.survivors {
            return Err(Error::Config("need offspring >= survivors >= 1".into()));
        }
        if self.victim_set.is_empty() {
            return Err(Error::Config("victim set is empty".into()));
        }
        Ok(())
    }

    /// Generations that fit in `queries` candidate evaluations.
    pub fn generations_for_budget(&self, queries: usize) -> usize {
        queries.saturating_sub(self.survivors) / self.offspring.max(1)
    }
}

/// `−(mean hard adversarial loss + λ·regularizer)` of one displacement.
pub fn fitness(
    benign: &TriangleMesh,
    disp: &[Vec3],
    goal: &AttackGoal,
    cfg: &EvolutionConfig,
    scene: &AttackScene,
) -> Result<f64> {
    let contexts = cfg.victim_set.iter().map(|p| PoseContext::new(benign, *p, scene)).collect::<Result<Vec<_>>>()?;
    let victim = Victim::new(scene)?;
    Ok(-hard_score(benign, disp, &contexts, &victim, goal, cfg.lambda, cfg.beta)?.objective)
}

struct Member {
    disp: Vec<Vec3>,
    score: HardScore,
}

/// Elitist evolution: each generation draws `offspring` children from
/// uniformly chosen survivors plus Gaussian noise, then keeps the best
/// `survivors` of parents and children.
pub fn evolve(benign: &TriangleMesh, goal: &AttackGoal, cfg: &EvolutionConfig, scene: &AttackScene) -> Result<AttackResult> {
    cfg.validate()?;
    goal.validate(scene.params.classes)?;
    let contexts = cfg
        .victim_set
        .iter()
        .map(|p| PoseContext::new(benign, *p, scene))
        .collect::<Result<Vec<_>>>()?;
    let victim = Victim::new(scene)?;
    check_precondition(benign, &contexts, &victim, goal)?;
    let score = |d: &[Vec3]| hard_score(benign, d, &contexts, &victim, goal, cfg.lambda, cfg.beta);

    let n = benign.vertex_count();
    let sigma = cfg.sigma * object_size(benign) / SIGMA_REFERENCE_SIZE;
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut population = Vec::with_capacity(cfg.survivors);
    for _ in 0..cfg.survivors {
        let disp = vec![Vec3::ZERO; n];
        population.push(Member { score: score(&disp)?, disp });
    }
    let full = contexts.len();
    // Selection is by fitness alone; the returned mesh is the best candidate
    // ever evaluated by (success count, objective).
    let mut best = Member { disp: population[0].disp.clone(), score: population[0].score.clone() };
    let mut queries = cfg.survivors;
    let mut trace = vec![population[0].score.objective];
    let mut generations = 0;
    let mut best_generation = 0;
    for g in 1..=cfg.max_generations {
        if cfg.stop_on_success && best.score.count() == full {
            break;
        }
        let children: Vec<Vec<Vec3>> = (0..cfg.offspring)
            .map(|_| {
                let parent = &population[rng.gen_range(0..population.len())].disp;
                parent
                    .iter()
                    .map(|d| {
                        if sigma == 0.0 {
                            *d
                        } else {
                            *d + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
                        }
                    })
                    .collect()
            })
            .collect();
        let mut pool = std::mem::take(&mut population);
        for disp in children {
            let member = Member { score: score(&disp)?, disp };
            if member.score.better_than(&best.score) {
                best = Member { disp: member.disp.clone(), score: member.score.clone() };
                best_generation = g;
            }
            pool.push(member);
        }
        queries += cfg.offspring;
        pool.sort_by(|a, b| a.score.objective.total_cmp(&b.score.objective));
        pool.truncate(cfg.survivors);
        population = pool;
        trace.push(population[0].score.objective);
        generations = g;
    }
    Ok(finish(
        Method::Evolution,
        *goal,
        benign,
        best.disp,
        best.score,
        &contexts,
        trace,
        generations,
        queries,
        best_generation,
        cfg.seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_generations() {
        let cfg = EvolutionConfig::default();
        assert_eq!(cfg.generations_for_budget(2000), 3);
        assert_eq!(cfg.generations_for_budget(504), 0);
    }

    #[test]
    fn validation() {
        assert!(EvolutionConfig::default().validate().is_ok());
        assert!(EvolutionConfig { survivors: 0, ..Default::default() }.validate().is_err());
        assert!(EvolutionConfig { offspring: 2, survivors: 3, ..Default::default() }.validate().is_err());
    }
}
