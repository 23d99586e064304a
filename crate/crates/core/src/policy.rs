//! Policy iteration with Riemannian policy evaluation.
//!
//! Each outer iteration collects a fresh batch under the current greedy
//! policy, fits the Q-function to it by Armijo descent warm-started at the
//! previous parameters, and then measures the new greedy policy with an
//! exploration-free validation rollout. Batches are discarded after use.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bellman::{BellmanObjective, Dataset};
use crate::env::{rollout, EnvModel};
use crate::error::{Error, Result};
use crate::gmm::GmmEvaluator;
use crate::manifold::{GmmParams, SpdMatrix};
use crate::optimizer::{optimize, ArmijoConfig, OptimizeOutcome};

/// How `Omega_0` is drawn: zero weights, means uniform in a box, and
/// covariances `cov_scale * I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub cov_scale: f64,
    pub mean_low: f64,
    pub mean_high: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            cov_scale: 0.25,
            mean_low: -1.0,
            mean_high: 1.0,
        }
    }
}

pub fn init_params<R: Rng>(k: usize, dz: usize, cfg: &InitConfig, rng: &mut R) -> Result<GmmParams> {
    if !(cfg.cov_scale > 0.0) || !(cfg.mean_low <= cfg.mean_high) {
        return Err(Error::Config("init: need cov_scale > 0 and mean_low <= mean_high".into()));
    }
    let means = (0..k)
        .map(|_| DVector::from_fn(dz, |_, _| rng.random_range(cfg.mean_low..=cfg.mean_high)))
        .collect();
    GmmParams::new(
        DVector::zeros(k),
        means,
        vec![SpdMatrix::scaled_identity(dz, cfg.cov_scale); k],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub epsilon: f64,
}

/// A parameter point viewed as the greedy policy it induces.
#[derive(Clone, Debug)]
pub struct PolicySnapshot {
    pub params: GmmParams,
    pub iteration: usize,
}

impl PolicySnapshot {
    pub fn action(&self, env: &EnvModel, s: &[f64]) -> usize {
        policy_improvement(env, &self.params, s)
    }
}

fn greedy(env: &EnvModel, ev: &GmmEvaluator<'_>, s: &[f64]) -> usize {
    ev.greedy(env.n_actions(), |a| env.embed(s, a))
        .expect("environment embeddings match the parameter dimension")
        .0
}

/// `argmin_a Q(s, a)`, lowest action index on ties.
pub fn policy_improvement(env: &EnvModel, params: &GmmParams, s: &[f64]) -> usize {
    greedy(env, &GmmEvaluator::new(params), s)
}

/// Fits the Q-function of the policy that generated `data`, starting at
/// `prev`.
pub fn policy_evaluation(
    prev: &GmmParams,
    data: &Dataset,
    alpha: f64,
    cfg: &ArmijoConfig,
) -> Result<OptimizeOutcome> {
    let objective = BellmanObjective::new(data, alpha)?;
    optimize(&objective, prev, cfg)
}

/// Outcome of one exploration-free rollout from the task's validation start.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationOutcome {
    /// Sum of one-step losses until the goal (tasks that end there) or the cap.
    pub total_loss: f64,
    /// Steps until the first goal state, if any.
    pub steps_to_goal: Option<usize>,
    /// Fraction of the final 20% of visited states satisfying the task's
    /// holding predicate.
    pub tail_hold_fraction: f64,
    pub steps: usize,
}

impl ValidationOutcome {
    pub fn held(&self) -> bool {
        self.tail_hold_fraction == 1.0
    }
}

pub fn validate_policy(env: &EnvModel, params: &GmmParams, horizon_cap: usize) -> Result<ValidationOutcome> {
    let ev = GmmEvaluator::new(params);
    let mut s = env.validation_start();
    let mut total_loss = 0.0;
    let mut steps_to_goal = None;
    let mut visited = Vec::with_capacity(horizon_cap);
    for step in 0..horizon_cap {
        let a = greedy(env, &ev, &s);
        total_loss += env.loss(&s, a);
        s = env.step(&s, a)?;
        visited.push(env.is_holding(&s));
        if env.is_goal(&s) && steps_to_goal.is_none() {
            steps_to_goal = Some(step + 1);
            if env.ends_at_goal() {
                break;
            }
        }
    }
    let tail = if env.ends_at_goal() {
        // Only the final state matters once the episode stops at the goal.
        &visited[visited.len().saturating_sub(1)..]
    } else {
        &visited[visited.len() - visited.len().div_ceil(5)..]
    };
    let tail_hold_fraction = if tail.is_empty() {
        0.0
    } else {
        tail.iter().filter(|&&h| h).count() as f64 / tail.len() as f64
    };
    Ok(ValidationOutcome {
        total_loss,
        steps_to_goal,
        tail_hold_fraction,
        steps: visited.len(),
    })
}

/// Measurements after outer iteration `iteration` (0-based): the validation
/// rollout is of the greedy policy on the freshly fitted parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub total_loss: f64,
    pub final_inner_loss: f64,
    pub steps_to_goal: Option<usize>,
    pub tail_hold_fraction: f64,
    pub samples: usize,
    pub descent_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyIterationConfig {
    pub n_iters: usize,
    pub components: usize,
    pub alpha: f64,
    pub armijo: ArmijoConfig,
    pub rollout: RolloutConfig,
    pub init: InitConfig,
    pub validation_horizon: usize,
}

/// Runs the outer loop from a seeded `Omega_0`; the trace is fully determined
/// by `seed`.
pub fn run_policy_iteration(
    env: &EnvModel,
    cfg: &PolicyIterationConfig,
    seed: u64,
) -> Result<Vec<IterationRecord>> {
    let (records, _) = run_policy_iteration_with_params(env, cfg, seed)?;
    Ok(records)
}

/// Same as [`run_policy_iteration`], also returning the final parameters.
pub fn run_policy_iteration_with_params(
    env: &EnvModel,
    cfg: &PolicyIterationConfig,
    seed: u64,
) -> Result<(Vec<IterationRecord>, GmmParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(cfg.components, env.embed_dim(), &cfg.init, &mut rng)?;
    let mut records = Vec::with_capacity(cfg.n_iters);
    for n in 0..cfg.n_iters {
        let rollout_seed = rng.random::<u64>();
        let data = {
            let ev = GmmEvaluator::new(&params);
            rollout(
                env,
                |s| greedy(env, &ev, s),
                cfg.rollout.epsilon,
                cfg.rollout.episodes,
                cfg.rollout.horizon,
                rollout_seed,
            )?
        };
        let fitted = policy_evaluation(&params, &data, cfg.alpha, &cfg.armijo)?;
        params = fitted.params;
        let v = validate_policy(env, &params, cfg.validation_horizon)?;
        records.push(IterationRecord {
            iteration: n,
            total_loss: v.total_loss,
            final_inner_loss: fitted.loss,
            steps_to_goal: v.steps_to_goal,
            tail_hold_fraction: v.tail_hold_fraction,
            samples: data.len(),
            descent_steps: fitted.trace.iter().filter(|r| r.step > 0.0).count(),
        });
    }
    Ok((records, params))
}
