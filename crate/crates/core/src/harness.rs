//! Seeded batches of policy-iteration runs, CSV output, and K sweeps.
//!
//! Configs are flat TOML tables. Every key has an environment-dependent
//! default, so a file only needs the keys it changes. The resolved config is
//! echoed next to the results and can be fed back in to reproduce them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvModel, LossVariant, MountainCarParams, PendulumParams};
use crate::error::{Error, Result};
use crate::optimizer::ArmijoConfig;
use crate::policy::{
    run_policy_iteration, InitConfig, IterationRecord, PolicyIterationConfig, RolloutConfig,
};

pub const RUNS_FILE: &str = "runs.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const ECHO_FILE: &str = "config_echo.toml";
pub const AGGREGATE_HEADER: &str = "iteration,mean_total_loss,median_total_loss,q25,q75,mean_inner_loss";
pub const RUNS_HEADER: &str =
    "run,seed,iteration,total_loss,final_inner_loss,reached_goal,steps_to_goal,tail_hold_fraction,samples,descent_steps";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    Pendulum,
    MountainCar,
}

/// Every resolved parameter of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvName,
    pub loss_variant: LossVariant,
    pub components: usize,
    pub discount: f64,

    pub armijo_initial_step: f64,
    pub armijo_shrink: f64,
    pub armijo_sufficient_decrease: f64,
    pub armijo_steps: usize,
    pub armijo_max_backtracks: u32,
    pub armijo_grad_tol: f64,

    pub episodes: usize,
    pub horizon_steps: usize,
    pub epsilon: f64,

    pub n_iters: usize,
    pub n_runs: usize,
    pub base_seed: u64,

    pub init_cov_scale: f64,
    pub init_mean_low: f64,
    pub init_mean_high: f64,
    pub validation_horizon_steps: usize,
    pub scale_inputs: bool,

    pub dt_seconds: f64,
    pub pendulum_mass_kg: f64,
    pub pendulum_length_m: f64,
    pub pendulum_gravity_mps2: f64,
    pub pendulum_friction: f64,
    pub pendulum_max_speed_radps: f64,
    pub pendulum_torques_newtons: Vec<f64>,
    pub pendulum_goal_tolerance_rad: f64,
    pub pendulum_hold_tolerance_rad: f64,
    pub pendulum_init_exclusion_rad: f64,

    pub car_force: f64,
    pub car_gravity: f64,
    pub car_min_position: f64,
    pub car_max_position: f64,
    pub car_max_speed: f64,
    pub car_goal_position: f64,
    pub car_goal_velocity: f64,
    pub car_init_position_low: f64,
    pub car_init_position_high: f64,

    pub output_dir: String,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `env`.
    pub fn defaults(env: EnvName) -> Self {
        let armijo = ArmijoConfig::default();
        let init = InitConfig::default();
        let p = PendulumParams::default();
        let c = MountainCarParams::default();
        let (loss_variant, components, episodes, horizon_steps) = match env {
            EnvName::Pendulum => (LossVariant::Continuous, 5, 20, 70),
            EnvName::MountainCar => (LossVariant::Discrete, 20, 10, 100),
        };
        ExperimentConfig {
            env,
            loss_variant,
            components,
            discount: 0.9,
            armijo_initial_step: armijo.initial_step,
            armijo_shrink: armijo.shrink,
            armijo_sufficient_decrease: armijo.sufficient_decrease,
            armijo_steps: armijo.steps,
            armijo_max_backtracks: armijo.max_backtracks,
            armijo_grad_tol: armijo.grad_tol,
            episodes,
            horizon_steps,
            epsilon: 0.1,
            n_iters: 20,
            n_runs: 20,
            base_seed: 0,
            init_cov_scale: init.cov_scale,
            init_mean_low: init.mean_low,
            init_mean_high: init.mean_high,
            validation_horizon_steps: 1000,
            scale_inputs: true,
            dt_seconds: p.dt_seconds,
            pendulum_mass_kg: p.mass_kg,
            pendulum_length_m: p.length_m,
            pendulum_gravity_mps2: p.gravity_mps2,
            pendulum_friction: p.friction,
            pendulum_max_speed_radps: p.max_speed_radps,
            pendulum_torques_newtons: p.torques,
            pendulum_goal_tolerance_rad: p.goal_tolerance_rad,
            pendulum_hold_tolerance_rad: p.hold_tolerance_rad,
            pendulum_init_exclusion_rad: p.init_exclusion_rad,
            car_force: c.force,
            car_gravity: c.gravity,
            car_min_position: c.min_position,
            car_max_position: c.max_position,
            car_max_speed: c.max_speed,
            car_goal_position: c.goal_position,
            car_goal_velocity: c.goal_velocity,
            car_init_position_low: c.init_position_low,
            car_init_position_high: c.init_position_high,
            output_dir: match env {
                EnvName::Pendulum => "out/pendulum".into(),
                EnvName::MountainCar => "out/mountain_car".into(),
            },
        }
    }

    /// Parses a flat TOML table. `env` is required; every other key falls
    /// back to that environment's default. Unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let env = match user.get("env") {
            Some(v) => EnvName::deserialize(v.clone())
                .map_err(|_| Error::Config(format!("env: expected \"pendulum\" or \"mountain_car\", got {v}")))?,
            None => return Err(Error::Config("missing required key `env`".into())),
        };
        let mut merged = toml::Table::try_from(Self::defaults(env))
            .map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in user {
            if !merged.contains_key(&key) {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
            merged.insert(key, value);
        }
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Every key with its resolved value.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("discount", self.discount >= 0.0 && self.discount < 1.0, "must lie in [0, 1)"),
            ("epsilon", (0.0..=1.0).contains(&self.epsilon), "must lie in [0, 1]"),
            ("components", self.components >= 1, "must be >= 1"),
            ("armijo_steps", self.armijo_steps >= 1, "must be >= 1"),
            ("episodes", self.episodes >= 1, "must be >= 1"),
            ("horizon_steps", self.horizon_steps >= 1, "must be >= 1"),
            ("n_runs", self.n_runs >= 1, "must be >= 1"),
            ("validation_horizon_steps", self.validation_horizon_steps >= 1, "must be >= 1"),
            ("base_seed", self.base_seed <= i64::MAX as u64, "must fit in a signed 64-bit integer"),
            ("dt_seconds", self.dt_seconds > 0.0 && self.dt_seconds.is_finite(), "must be > 0"),
            ("pendulum_mass_kg", self.pendulum_mass_kg > 0.0, "must be > 0"),
            ("pendulum_length_m", self.pendulum_length_m > 0.0, "must be > 0"),
            ("pendulum_gravity_mps2", self.pendulum_gravity_mps2 >= 0.0, "must be >= 0"),
            ("pendulum_friction", self.pendulum_friction >= 0.0, "must be >= 0"),
            ("pendulum_max_speed_radps", self.pendulum_max_speed_radps > 0.0, "must be > 0"),
            ("pendulum_torques_newtons", !self.pendulum_torques_newtons.is_empty(), "must not be empty"),
            ("pendulum_goal_tolerance_rad", self.pendulum_goal_tolerance_rad >= 0.0, "must be >= 0"),
            ("pendulum_hold_tolerance_rad", self.pendulum_hold_tolerance_rad >= 0.0, "must be >= 0"),
            (
                "pendulum_init_exclusion_rad",
                (0.0..std::f64::consts::PI).contains(&self.pendulum_init_exclusion_rad),
                "must lie in [0, pi)",
            ),
            ("car_max_speed", self.car_max_speed > 0.0, "must be > 0"),
            ("car_max_position", self.car_max_position > self.car_min_position, "must exceed car_min_position"),
            (
                "car_init_position_high",
                self.car_init_position_low <= self.car_init_position_high
                    && self.car_init_position_low >= self.car_min_position
                    && self.car_init_position_high <= self.car_max_position,
                "init range must be ordered and inside the track",
            ),
        ];
        for (key, ok, why) in positive {
            if !ok {
                return bad(format!("{key} {why}"));
            }
        }
        let finite = [
            self.discount,
            self.epsilon,
            self.armijo_initial_step,
            self.armijo_shrink,
            self.armijo_sufficient_decrease,
            self.armijo_grad_tol,
            self.init_cov_scale,
            self.init_mean_low,
            self.init_mean_high,
            self.car_force,
            self.car_gravity,
            self.car_goal_position,
            self.car_goal_velocity,
        ];
        if finite.iter().any(|v| !v.is_finite())
            || self.pendulum_torques_newtons.iter().any(|v| !v.is_finite())
        {
            return bad("numeric fields must be finite".into());
        }
        if self.loss_variant == LossVariant::Discrete
            && self.env == EnvName::Pendulum
            && self.pendulum_goal_tolerance_rad == 0.0
        {
            return bad("pendulum_goal_tolerance_rad must be > 0 for the discrete loss".into());
        }
        self.armijo().validate()?;
        if !(self.init_cov_scale > 0.0 && self.init_mean_low <= self.init_mean_high) {
            return bad("init_cov_scale must be > 0 and init_mean_low <= init_mean_high".into());
        }
        Ok(())
    }

    pub fn armijo(&self) -> ArmijoConfig {
        ArmijoConfig {
            initial_step: self.armijo_initial_step,
            shrink: self.armijo_shrink,
            sufficient_decrease: self.armijo_sufficient_decrease,
            steps: self.armijo_steps,
            max_backtracks: self.armijo_max_backtracks,
            grad_tol: self.armijo_grad_tol,
        }
    }

    pub fn env_model(&self) -> EnvModel {
        let mut env = match self.env {
            EnvName::Pendulum => EnvModel::pendulum(
                PendulumParams {
                    mass_kg: self.pendulum_mass_kg,
                    length_m: self.pendulum_length_m,
                    gravity_mps2: self.pendulum_gravity_mps2,
                    friction: self.pendulum_friction,
                    dt_seconds: self.dt_seconds,
                    max_speed_radps: self.pendulum_max_speed_radps,
                    torques: self.pendulum_torques_newtons.clone(),
                    goal_tolerance_rad: self.pendulum_goal_tolerance_rad,
                    hold_tolerance_rad: self.pendulum_hold_tolerance_rad,
                    init_exclusion_rad: self.pendulum_init_exclusion_rad,
                },
                self.loss_variant,
            ),
            EnvName::MountainCar => EnvModel::mountain_car(
                MountainCarParams {
                    force: self.car_force,
                    gravity: self.car_gravity,
                    min_position: self.car_min_position,
                    max_position: self.car_max_position,
                    max_speed: self.car_max_speed,
                    goal_position: self.car_goal_position,
                    goal_velocity: self.car_goal_velocity,
                    init_position_low: self.car_init_position_low,
                    init_position_high: self.car_init_position_high,
                },
                self.loss_variant,
            ),
        };
        env.scale_inputs = self.scale_inputs;
        env
    }

    pub fn policy_iteration(&self) -> PolicyIterationConfig {
        PolicyIterationConfig {
            n_iters: self.n_iters,
            components: self.components,
            alpha: self.discount,
            armijo: self.armijo(),
            rollout: RolloutConfig {
                episodes: self.episodes,
                horizon: self.horizon_steps,
                epsilon: self.epsilon,
            },
            init: InitConfig {
                cov_scale: self.init_cov_scale,
                mean_low: self.init_mean_low,
                mean_high: self.init_mean_high,
            },
            validation_horizon: self.validation_horizon_steps,
        }
    }

    pub fn seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub run: usize,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub mean_total_loss: f64,
    pub median_total_loss: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean_inner_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Ordered by run index regardless of completion order.
    pub runs: Vec<RunTrace>,
}

/// Worker count used when none is given.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Executes `n_runs` runs with seeds `base_seed + i` on a pool of `workers`
/// threads.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let env = cfg.env_model();
    let pi = cfg.policy_iteration();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let runs = pool.install(|| {
        (0..cfg.n_runs)
            .into_par_iter()
            .map(|run| {
                let seed = cfg.seed(run);
                run_policy_iteration(&env, &pi, seed).map(|records| RunTrace { run, seed, records })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        runs,
    })
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl ExperimentResult {
    pub fn n_iters(&self) -> usize {
        self.runs.iter().map(|r| r.records.len()).min().unwrap_or(0)
    }

    pub fn aggregate(&self) -> Vec<AggregateRow> {
        (0..self.n_iters())
            .map(|n| {
                let mut totals: Vec<f64> = self.runs.iter().map(|r| r.records[n].total_loss).collect();
                let inner: Vec<f64> = self.runs.iter().map(|r| r.records[n].final_inner_loss).collect();
                totals.sort_by(f64::total_cmp);
                AggregateRow {
                    iteration: n,
                    mean_total_loss: mean(&totals),
                    median_total_loss: quantile(&totals, 0.5),
                    q25: quantile(&totals, 0.25),
                    q75: quantile(&totals, 0.75),
                    mean_inner_loss: mean(&inner),
                }
            })
            .collect()
    }

    /// Mean validation loss of run `run` over iterations `lo..=hi`, clamped
    /// to the recorded range.
    pub fn run_window_mean(&self, run: usize, lo: usize, hi: usize) -> f64 {
        let recs = &self.runs[run].records;
        let hi = hi.min(recs.len().saturating_sub(1));
        let xs: Vec<f64> = recs[lo.min(hi)..=hi].iter().map(|r| r.total_loss).collect();
        mean(&xs)
    }

    /// Mean over runs of [`Self::run_window_mean`].
    pub fn window_mean(&self, lo: usize, hi: usize) -> f64 {
        let xs: Vec<f64> = (0..self.runs.len()).map(|r| self.run_window_mean(r, lo, hi)).collect();
        mean(&xs)
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from(RUNS_HEADER);
        out.push('\n');
        for trace in &self.runs {
            for r in &trace.records {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.16e},{:.16e},{},{},{:.16e},{},{}",
                    trace.run,
                    trace.seed,
                    r.iteration,
                    r.total_loss,
                    r.final_inner_loss,
                    u8::from(r.steps_to_goal.is_some()),
                    r.steps_to_goal.unwrap_or(0),
                    r.tail_hold_fraction,
                    r.samples,
                    r.descent_steps
                );
            }
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from(AGGREGATE_HEADER);
        out.push('\n');
        for row in self.aggregate() {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                row.iteration, row.mean_total_loss, row.median_total_loss, row.q25, row.q75, row.mean_inner_loss
            );
        }
        out
    }

    /// Writes the run traces, the aggregate, and the config echo into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            (RUNS_FILE, self.runs_csv()),
            (AGGREGATE_FILE, self.aggregate_csv()),
            (ECHO_FILE, self.config.to_toml_string()?),
        ];
        let mut written = Vec::with_capacity(files.len());
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Ranking of the K values inside one iteration window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowRanking {
    pub lo: usize,
    pub hi: usize,
    /// `(K, mean validation loss)`, best first; equal means keep K order.
    pub ranking: Vec<(usize, f64)>,
    /// Groups of K values whose window means are exactly equal.
    pub ties: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub ks: Vec<usize>,
    pub windows: Vec<WindowRanking>,
    /// Fraction of (seed, adjacent K pair) comparisons in the early window
    /// where the larger K has a loss no higher than the smaller K.
    pub early_paired_fraction: f64,
    pub early_comparisons: usize,
    /// Whether the early-window means are non-increasing in K.
    pub larger_k_dominates_early: bool,
}

/// Last iteration index of the early window.
pub const EARLY_WINDOW_END: usize = 10;

/// Checks that the configs differ only in `components` (and `output_dir`).
pub fn check_sweep_configs(cfgs: &[ExperimentConfig]) -> Result<()> {
    let Some(first) = cfgs.first() else {
        return Err(Error::Config("sweep needs at least one config".into()));
    };
    let strip = |c: &ExperimentConfig| ExperimentConfig {
        components: 0,
        output_dir: String::new(),
        ..c.clone()
    };
    let base = strip(first);
    if cfgs.iter().any(|c| strip(c) != base) {
        return Err(Error::Config("sweep configs must differ only in components".into()));
    }
    Ok(())
}

/// Orders K values per window and counts seed-paired comparisons between
/// neighbouring K values. Results must come from configs accepted by
/// [`check_sweep_configs`] and be sorted by K.
pub fn compare_k_sweep(results: &[ExperimentResult]) -> Result<SweepReport> {
    let cfgs: Vec<_> = results.iter().map(|r| r.config.clone()).collect();
    check_sweep_configs(&cfgs)?;
    let ks: Vec<usize> = cfgs.iter().map(|c| c.components).collect();
    if ks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("sweep results must be sorted by components".into()));
    }
    let n_iters = results.iter().map(|r| r.n_iters()).min().unwrap_or(0);
    if n_iters == 0 {
        return Err(Error::Config("sweep needs n_iters >= 1".into()));
    }
    let early_hi = EARLY_WINDOW_END.min(n_iters - 1);
    let mut bounds = vec![(0, early_hi)];
    if early_hi + 1 < n_iters {
        bounds.push((early_hi + 1, n_iters - 1));
    }
    let windows = bounds
        .into_iter()
        .map(|(lo, hi)| {
            let mut ranking: Vec<(usize, f64)> =
                results.iter().map(|r| (r.config.components, r.window_mean(lo, hi))).collect();
            ranking.sort_by(|a, b| a.1.total_cmp(&b.1));
            let mut ties: Vec<Vec<usize>> = Vec::new();
            for pair in ranking.windows(2) {
                if pair[0].1 == pair[1].1 {
                    match ties.last_mut() {
                        Some(g) if g.last() == Some(&pair[0].0) => g.push(pair[1].0),
                        _ => ties.push(vec![pair[0].0, pair[1].0]),
                    }
                }
            }
            WindowRanking { lo, hi, ranking, ties }
        })
        .collect::<Vec<_>>();

    let n_runs = results.iter().map(|r| r.runs.len()).min().unwrap_or(0);
    let mut wins = 0;
    let mut comparisons = 0;
    for pair in results.windows(2) {
        for run in 0..n_runs {
            comparisons += 1;
            if pair[1].run_window_mean(run, 0, early_hi) <= pair[0].run_window_mean(run, 0, early_hi) {
                wins += 1;
            }
        }
    }
    let early: Vec<f64> = results.iter().map(|r| r.window_mean(0, early_hi)).collect();
    Ok(SweepReport {
        ks,
        early_paired_fraction: if comparisons == 0 { 1.0 } else { wins as f64 / comparisons as f64 },
        early_comparisons: comparisons,
        larger_k_dominates_early: early.windows(2).all(|w| w[1] <= w[0]),
        windows,
    })
}

impl SweepReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.windows {
            let order: Vec<String> = w.ranking.iter().map(|(k, m)| format!("K={k} ({m:.6})")).collect();
            let _ = writeln!(out, "iterations {}-{}: {}", w.lo, w.hi, order.join(" <= "));
            for group in &w.ties {
                let ks: Vec<String> = group.iter().map(|k| k.to_string()).collect();
                let _ = writeln!(out, "  tie: K = {}", ks.join(", "));
            }
        }
        let _ = writeln!(
            out,
            "early paired comparisons with larger K no worse: {:.3} of {}",
            self.early_paired_fraction, self.early_comparisons
        );
        let _ = writeln!(out, "larger K dominates early: {}", self.larger_k_dominates_early);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(env: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            "env = \"{env}\"\nn_runs = 2\nn_iters = 2\nepisodes = 2\nhorizon_steps = 20\narmijo_steps = 3\nvalidation_horizon_steps = 50\n"
        ))
        .unwrap()
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let cfg = ExperimentConfig::from_toml_str("env = \"mountain_car\"").unwrap();
        assert_eq!(cfg, ExperimentConfig::defaults(EnvName::MountainCar));
        assert_eq!(cfg.components, 20);
        assert_eq!(cfg.loss_variant, LossVariant::Discrete);
        let cfg = ExperimentConfig::from_toml_str("env = \"pendulum\"\ncomponents = 7").unwrap();
        assert_eq!(cfg.components, 7);
        assert_eq!(cfg.episodes * cfg.horizon_steps, 1400);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "components = 5",
            "env = \"cartpole\"",
            "env = \"pendulum\"\nbogus = 1",
            "env = \"pendulum\"\nn_runs = 0",
            "env = \"pendulum\"\ndiscount = 1.0",
            "env = \"pendulum\"\nepsilon = 1.5",
            "env = \"pendulum\"\ncomponents = \"five\"",
            "env = \"pendulum\"\narmijo_shrink = 1.0",
            "env = \"pendulum\"\narmijo_steps = 0",
            "env = \"pendulum\"\npendulum_torques_newtons = []",
            "env = \"pendulum\"\ninit_cov_scale = 0.0",
            "env = [",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))),
                "accepted {text:?}"
            );
        }
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::defaults(EnvName::Pendulum);
        cfg.discount = 0.1 + 0.2;
        cfg.base_seed = 12345;
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.25), 1.75);
        assert_eq!(quantile(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn header_only_when_no_iterations() {
        let mut cfg = tiny("pendulum");
        cfg.n_runs = 1;
        cfg.n_iters = 0;
        let res = run_experiment(&cfg, 1).unwrap();
        assert_eq!(res.aggregate_csv(), format!("{AGGREGATE_HEADER}\n"));
        assert_eq!(res.runs_csv(), format!("{RUNS_HEADER}\n"));
    }

    #[test]
    fn outputs_are_finite_and_shaped() {
        let cfg = tiny("mountain_car");
        let res = run_experiment(&cfg, 2).unwrap();
        assert_eq!(res.runs.len(), 2);
        assert_eq!(res.runs[1].seed, cfg.base_seed + 1);
        let csv = res.runs_csv();
        assert_eq!(csv.lines().count(), 1 + cfg.n_runs * cfg.n_iters);
        for line in csv.lines().skip(1).chain(res.aggregate_csv().lines().skip(1)) {
            for field in line.split(',') {
                assert!(field.parse::<f64>().unwrap().is_finite(), "{line}");
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = tiny("pendulum");
        let a = run_experiment(&cfg, 1).unwrap();
        let b = run_experiment(&cfg, 3).unwrap();
        assert_eq!(a.runs_csv(), b.runs_csv());
        assert_eq!(a.aggregate_csv(), b.aggregate_csv());
    }

    #[test]
    fn writes_three_files() {
        let cfg = tiny("pendulum");
        let dir = tempfile::tempdir().unwrap();
        let res = run_experiment(&cfg, 1).unwrap();
        let files = res.write_outputs(dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let echo = ExperimentConfig::from_file(&dir.path().join(ECHO_FILE)).unwrap();
        assert_eq!(echo, cfg);
    }

    fn fake(k: usize, losses: &[&[f64]]) -> ExperimentResult {
        let mut config = ExperimentConfig::defaults(EnvName::MountainCar);
        config.components = k;
        let runs = losses
            .iter()
            .enumerate()
            .map(|(run, ls)| RunTrace {
                run,
                seed: run as u64,
                records: ls
                    .iter()
                    .enumerate()
                    .map(|(iteration, &total_loss)| IterationRecord {
                        iteration,
                        total_loss,
                        final_inner_loss: 0.0,
                        steps_to_goal: None,
                        tail_hold_fraction: 0.0,
                        samples: 0,
                        descent_steps: 0,
                    })
                    .collect(),
            })
            .collect();
        ExperimentResult { config, runs }
    }

    #[test]
    fn sweep_single_k_is_trivial() {
        let r = compare_k_sweep(&[fake(5, &[&[3.0, 2.0]])]).unwrap();
        assert_eq!(r.windows.len(), 1);
        assert_eq!(r.windows[0].ranking, vec![(5, 2.5)]);
        assert_eq!(r.early_comparisons, 0);
        assert!(r.larger_k_dominates_early);
    }

    #[test]
    fn sweep_reports_ties_and_pairs() {
        let a = fake(5, &[&[4.0, 4.0], &[1.0, 1.0]]);
        let b = fake(5, &[&[4.0, 4.0], &[1.0, 1.0]]);
        let r = compare_k_sweep(&[a, b]).unwrap();
        assert_eq!(r.windows[0].ties, vec![vec![5, 5]]);
        assert_eq!(r.early_paired_fraction, 1.0);

        let small = fake(5, &[&[4.0], &[1.0]]);
        let large = fake(50, &[&[2.0], &[3.0]]);
        let r = compare_k_sweep(&[small, large]).unwrap();
        assert_eq!(r.early_comparisons, 2);
        assert_eq!(r.early_paired_fraction, 0.5);
        assert_eq!(r.windows[0].ranking, vec![(5, 2.5), (50, 2.5)]);
    }

    #[test]
    fn sweep_rejects_mismatched_configs() {
        let a = fake(5, &[&[1.0]]);
        let mut b = fake(20, &[&[1.0]]);
        b.config.discount = 0.5;
        assert!(compare_k_sweep(&[a.clone(), b]).is_err());
        let c = fake(2, &[&[1.0]]);
        assert!(compare_k_sweep(&[a, c]).is_err());
    }
}
