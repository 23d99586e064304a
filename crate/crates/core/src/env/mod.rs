//! Benchmark tasks, the state-action embedding, and data collection.

mod mountain_car;
mod pendulum;

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bellman::{Dataset, Transition};
use crate::error::{Error, Result};
use crate::gmm::StateActionVector;

pub use mountain_car::{
    mountaincar_is_goal, mountaincar_loss, mountaincar_step, MountainCarParams, MountainCarState,
    MOUNTAIN_CAR_ACTIONS,
};
pub use pendulum::{
    pendulum_energy, pendulum_loss, pendulum_step, wrap_angle, PendulumParams, PendulumState,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Continuous,
    Discrete,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Pendulum(PendulumParams),
    MountainCar(MountainCarParams),
}

/// A task plus the choices that turn it into a learning problem: which
/// one-step loss to use and whether to rescale embeddings to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvModel {
    pub task: Task,
    pub variant: LossVariant,
    pub scale_inputs: bool,
}

impl EnvModel {
    pub fn pendulum(params: PendulumParams, variant: LossVariant) -> Self {
        EnvModel {
            task: Task::Pendulum(params),
            variant,
            scale_inputs: true,
        }
    }

    pub fn mountain_car(params: MountainCarParams, variant: LossVariant) -> Self {
        EnvModel {
            task: Task::MountainCar(params),
            variant,
            scale_inputs: true,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.task {
            Task::Pendulum(_) => "pendulum",
            Task::MountainCar(_) => "mountain_car",
        }
    }

    pub fn state_dim(&self) -> usize {
        2
    }

    /// Length of the embedded vector: state coordinates plus one action
    /// coordinate.
    pub fn embed_dim(&self) -> usize {
        self.state_dim() + 1
    }

    pub fn n_actions(&self) -> usize {
        match &self.task {
            Task::Pendulum(p) => p.torques.len(),
            Task::MountainCar(_) => MOUNTAIN_CAR_ACTIONS.len(),
        }
    }

    /// Physical value of action `a`: torque in newtons, or force index.
    pub fn action_value(&self, a: usize) -> f64 {
        match &self.task {
            Task::Pendulum(p) => p.torques[a],
            Task::MountainCar(_) => MOUNTAIN_CAR_ACTIONS[a] as f64,
        }
    }

    pub fn action_index(&self, value: f64) -> Option<usize> {
        (0..self.n_actions()).find(|&a| self.action_value(a) == value)
    }

    pub fn state_bounds(&self) -> [(f64, f64); 2] {
        match &self.task {
            Task::Pendulum(p) => [(-PI, PI), (-p.max_speed_radps, p.max_speed_radps)],
            Task::MountainCar(p) => [(p.min_position, p.max_position), (-p.max_speed, p.max_speed)],
        }
    }

    pub fn action_bounds(&self) -> (f64, f64) {
        let vals = (0..self.n_actions()).map(|a| self.action_value(a));
        let lo = vals.clone().fold(f64::INFINITY, f64::min);
        let hi = vals.fold(f64::NEG_INFINITY, f64::max);
        match self.task {
            // Symmetric so that zero torque embeds to zero.
            Task::Pendulum(_) => {
                let m = lo.abs().max(hi.abs());
                (-m, m)
            }
            Task::MountainCar(_) => (lo, hi),
        }
    }

    pub fn in_bounds(&self, s: &[f64]) -> bool {
        s.len() == self.state_dim()
            && self
                .state_bounds()
                .iter()
                .zip(s)
                .all(|(&(lo, hi), &v)| v >= lo && v <= hi)
    }

    pub fn step(&self, s: &[f64], a: usize) -> Result<Vec<f64>> {
        self.check_action(a)?;
        Ok(match &self.task {
            Task::Pendulum(p) => pendulum_step(p, PendulumState::from_slice(s), p.torques[a])?.to_vec(),
            Task::MountainCar(p) => {
                mountaincar_step(p, MountainCarState::from_slice(s), MOUNTAIN_CAR_ACTIONS[a])?.to_vec()
            }
        })
    }

    /// One-step loss `g(s, a)`; depends only on the state for both tasks.
    pub fn loss(&self, s: &[f64], _a: usize) -> f64 {
        match &self.task {
            Task::Pendulum(p) => pendulum_loss(p, PendulumState::from_slice(s), self.variant),
            Task::MountainCar(p) => mountaincar_loss(p, MountainCarState::from_slice(s), self.variant),
        }
    }

    pub fn is_goal(&self, s: &[f64]) -> bool {
        match &self.task {
            Task::Pendulum(p) => s[0].abs() <= p.goal_tolerance_rad,
            Task::MountainCar(p) => mountaincar_is_goal(p, MountainCarState::from_slice(s)),
        }
    }

    /// Whether episodes stop at the first goal state.
    pub fn ends_at_goal(&self) -> bool {
        matches!(self.task, Task::MountainCar(_))
    }

    /// Task-level success predicate for a single validation state: near
    /// upright for the pendulum, inside the goal set for the car.
    pub fn is_holding(&self, s: &[f64]) -> bool {
        match &self.task {
            Task::Pendulum(p) => s[0].abs() < p.hold_tolerance_rad,
            Task::MountainCar(_) => self.is_goal(s),
        }
    }

    pub fn sample_initial<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.task {
            Task::Pendulum(p) => {
                let theta = loop {
                    let t = rng.random_range(-PI..=PI);
                    if t.abs() >= p.init_exclusion_rad {
                        break t;
                    }
                };
                vec![theta, 0.0]
            }
            Task::MountainCar(p) => {
                vec![rng.random_range(p.init_position_low..=p.init_position_high), 0.0]
            }
        }
    }

    /// Fixed start for validation: hanging down at rest, or the car at rest at
    /// `x = -0.5`.
    pub fn validation_start(&self) -> Vec<f64> {
        match self.task {
            Task::Pendulum(_) => vec![PI, 0.0],
            Task::MountainCar(_) => vec![-0.5, 0.0],
        }
    }

    /// `z = (s, a)` with the action appended as its physical value; with
    /// `scale_inputs` every coordinate is mapped affinely onto `[-1, 1]`.
    pub fn embed(&self, s: &[f64], a: usize) -> StateActionVector {
        let mut z = Vec::with_capacity(self.embed_dim());
        let bounds = self.state_bounds();
        let scale = |v: f64, (lo, hi): (f64, f64)| {
            if self.scale_inputs {
                2.0 * (v - lo) / (hi - lo) - 1.0
            } else {
                v
            }
        };
        for (i, &v) in s.iter().enumerate() {
            z.push(scale(v, bounds[i]));
        }
        z.push(scale(self.action_value(a), self.action_bounds()));
        StateActionVector::from_slice(&z)
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions() {
            return Err(Error::Domain(format!(
                "action index {a} out of range for {} actions",
                self.n_actions()
            )));
        }
        Ok(())
    }
}

/// Runs `episodes` episodes of at most `horizon` steps, acting greedily under
/// `policy` with probability `1 - epsilon` and uniformly at random otherwise.
///
/// Episodes of tasks that end at the goal stop early, so the batch can be
/// shorter than `episodes * horizon`. `z'` is embedded with `policy`.
pub fn rollout<P>(
    env: &EnvModel,
    policy: P,
    epsilon: f64,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Dataset>
where
    P: Fn(&[f64]) -> usize,
{
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(episodes * horizon);
    for _ in 0..episodes {
        let mut s = env.sample_initial(&mut rng);
        for _ in 0..horizon {
            let explore = rng.random::<f64>() < epsilon;
            let a = if explore {
                rng.random_range(0..env.n_actions())
            } else {
                policy(&s)
            };
            let next = env.step(&s, a)?;
            let done = env.ends_at_goal() && env.is_goal(&next);
            transitions.push(Transition {
                state: s,
                action: a,
                loss: 0.0,
                next_state: next.clone(),
            });
            let t = transitions.last_mut().unwrap();
            t.loss = env.loss(&t.state, a);
            s = next;
            if done {
                break;
            }
        }
    }
    dataset_for_policy(env, transitions, policy)
}

/// Attaches embeddings `z_t = (s_t, a_t)` and `z'_t = (s'_t, policy(s'_t))`.
pub fn dataset_for_policy<P>(env: &EnvModel, transitions: Vec<Transition>, policy: P) -> Result<Dataset>
where
    P: Fn(&[f64]) -> usize,
{
    let z = transitions.iter().map(|t| env.embed(&t.state, t.action)).collect();
    let z_next = transitions
        .iter()
        .map(|t| env.embed(&t.next_state, policy(&t.next_state)))
        .collect();
    Dataset::new(transitions, z, z_next)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one transition per line: state, action value, loss, next state,
/// tab-separated with 17 significant digits.
pub fn write_transitions_tsv<W: Write>(env: &EnvModel, transitions: &[Transition], mut w: W) -> Result<()> {
    for t in transitions {
        let mut fields: Vec<String> = t.state.iter().map(|&v| fmt17(v)).collect();
        fields.push(fmt17(env.action_value(t.action)));
        fields.push(fmt17(t.loss));
        fields.extend(t.next_state.iter().map(|&v| fmt17(v)));
        writeln!(w, "{}", fields.join("\t"))?;
    }
    Ok(())
}

pub fn read_transitions_tsv<R: BufRead>(env: &EnvModel, r: R) -> Result<Vec<Transition>> {
    let d = env.state_dim();
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Domain(format!("line {}: {msg}", lineno + 1));
        let vals = line
            .split('\t')
            .map(|f| f.parse::<f64>().map_err(|_| bad("unparsable number")))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 2 * d + 2 {
            return Err(bad("wrong number of fields"));
        }
        let action = env.action_index(vals[d]).ok_or_else(|| bad("unknown action value"))?;
        out.push(Transition {
            state: vals[..d].to_vec(),
            action,
            loss: vals[d + 1],
            next_state: vals[d + 2..].to_vec(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::Rng;

    fn pendulum() -> EnvModel {
        EnvModel::pendulum(PendulumParams::default(), LossVariant::Continuous)
    }

    fn car() -> EnvModel {
        EnvModel::mountain_car(MountainCarParams::default(), LossVariant::Discrete)
    }

    #[test]
    fn embedding_midpoints_and_corners() {
        let z = pendulum().embed(&[0.0, 0.0], 2);
        assert_eq!(z.as_slice(), &[0.0, 0.0, 0.0]);
        let z = car().embed(&[0.6, 0.07], 2);
        assert_eq!(z.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn embedding_injective_over_actions() {
        for env in [pendulum(), car()] {
            let s = env.validation_start();
            let zs: Vec<_> = (0..env.n_actions()).map(|a| env.embed(&s, a)).collect();
            for i in 0..zs.len() {
                for j in (i + 1)..zs.len() {
                    assert_ne!(zs[i], zs[j]);
                }
            }
        }
    }

    #[test]
    fn unscaled_embedding_keeps_physical_values() {
        let mut env = pendulum();
        env.scale_inputs = false;
        assert_eq!(env.embed(&[1.0, -2.0], 4).as_slice(), &[1.0, -2.0, 5.0]);
    }

    #[test]
    fn rollout_sizes_and_determinism() {
        let env = pendulum();
        let d = rollout(&env, |_| 0, 0.1, 20, 70, 7).unwrap();
        assert_eq!(d.len(), 1400);
        let again = rollout(&env, |_| 0, 0.1, 20, 70, 7).unwrap();
        assert_eq!(d, again);
        let other = rollout(&env, |_| 0, 0.1, 20, 70, 8).unwrap();
        assert_ne!(d, other);
    }

    #[test]
    fn greedy_only_rollout_uses_policy_action() {
        let env = pendulum();
        let d = rollout(&env, |_| 3, 0.0, 3, 10, 1).unwrap();
        assert!(d.transitions().iter().all(|t| t.action == 3));
        assert_eq!(d.z_next()[0], env.embed(&d.transitions()[0].next_state, 3));
    }

    #[test]
    fn mountain_car_episode_stops_at_goal() {
        let env = car();
        // Energy-pumping policy reaches the goal well within 500 steps.
        let pump = |s: &[f64]| if s[1] < 0.0 { 0 } else { 2 };
        let d = rollout(&env, pump, 0.0, 2, 500, 3).unwrap();
        assert!(d.len() < 1000);
        let goals = d.transitions().iter().filter(|t| env.is_goal(&t.next_state)).count();
        assert_eq!(goals, 2);
        assert!(d.transitions().iter().all(|t| !env.is_goal(&t.state)));
    }

    #[test]
    fn rejects_bad_epsilon_and_action() {
        assert!(rollout(&pendulum(), |_| 0, 1.5, 1, 1, 0).is_err());
        assert!(pendulum().step(&[0.0, 0.0], 9).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let env = car();
        let d = rollout(&env, |_| 1, 0.5, 2, 30, 9).unwrap();
        let mut buf = Vec::new();
        write_transitions_tsv(&env, d.transitions(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), d.len());
        assert_eq!(text.lines().next().unwrap().split('\t').count(), 6);
        let back = read_transitions_tsv(&env, &buf[..]).unwrap();
        assert_eq!(back, d.transitions());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn states_stay_in_bounds(seed in any::<u64>(), use_car in any::<bool>()) {
            let (env, max_loss) = if use_car {
                (EnvModel::mountain_car(MountainCarParams::default(), LossVariant::Continuous), 0.885)
            } else {
                (pendulum(), 1.0)
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = env.sample_initial(&mut rng);
            for _ in 0..5_000 {
                let a = rng.random_range(0..env.n_actions());
                s = env.step(&s, a).unwrap();
                prop_assert!(env.in_bounds(&s), "{:?}", s);
                let g = env.loss(&s, a);
                prop_assert!((0.0..=max_loss).contains(&g));
            }
        }
    }
}
