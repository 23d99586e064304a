//! Riemannian steepest descent with Armijo backtracking.
//!
//! Each iteration takes `Upsilon = -grad L(Omega)` and accepts the step
//! `t = alpha_bar * beta^M` for the smallest `M` in `1..=max_backtracks` with
//!
//! ```text
//! L(Omega) - L(R_Omega(t Upsilon)) >= sigma * t * ||grad L(Omega)||^2_Omega
//! ```
//!
//! A trial whose retraction leaves the SPD cone counts as failed. If no trial
//! passes the iterate stays put and the step is reported as zero.

use serde::{Deserialize, Serialize};

use crate::bellman::BellmanObjective;
use crate::error::{Error, Result};
use crate::manifold::{product_inner, retract, GmmParams, TangentVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmijoConfig {
    /// Initial step scale `alpha_bar`.
    pub initial_step: f64,
    /// Shrink factor `beta`.
    pub shrink: f64,
    /// Sufficient-decrease constant `sigma`.
    pub sufficient_decrease: f64,
    /// Number of descent iterations `J`.
    pub steps: usize,
    /// Cap on the backtracking exponent `M`.
    pub max_backtracks: u32,
    /// Stop early once the gradient norm falls below this.
    pub grad_tol: f64,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        ArmijoConfig {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            steps: 100,
            max_backtracks: 30,
            grad_tol: 1e-8,
        }
    }
}

impl ArmijoConfig {
    /// Range checks on every field. `steps = 0` is accepted and makes
    /// [`optimize`] a no-op.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("armijo: {what}")));
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial step must be > 0");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink factor must lie in (0, 1)");
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return bad("sufficient-decrease constant must lie in (0, 1)");
        }
        if self.max_backtracks == 0 {
            return bad("max backtracks must be >= 1");
        }
        if !(self.grad_tol >= 0.0) {
            return bad("gradient tolerance must be >= 0");
        }
        Ok(())
    }
}

/// Result of one line search.
#[derive(Clone, Debug)]
pub struct ArmijoStep {
    /// Accepted step size, or `0.0` on stall.
    pub step: f64,
    /// Accepted exponent `M`; `None` on stall.
    pub backtracks: Option<u32>,
    pub params: GmmParams,
    pub loss: f64,
}

impl ArmijoStep {
    pub fn stalled(&self) -> bool {
        self.backtracks.is_none()
    }
}

/// Backtracking search along `-grad` from `params`, where `loss_at` is the
/// loss at `params`.
pub fn armijo_search(
    objective: &BellmanObjective<'_>,
    params: &GmmParams,
    grad: &TangentVector,
    loss_at: f64,
    cfg: &ArmijoConfig,
) -> Result<ArmijoStep> {
    let grad_sq = product_inner(params, grad, grad)?;
    let direction = grad.scaled(-1.0);
    let mut step = cfg.initial_step;
    for m in 1..=cfg.max_backtracks {
        step *= cfg.shrink;
        let candidate = match retract(params, step, &direction) {
            Ok(p) => p,
            Err(Error::StepTooLarge(_)) => continue,
            Err(e) => return Err(e),
        };
        let next_loss = objective.value(&candidate)?;
        if loss_at - next_loss >= cfg.sufficient_decrease * step * grad_sq {
            return Ok(ArmijoStep {
                step,
                backtracks: Some(m),
                params: candidate,
                loss: next_loss,
            });
        }
    }
    Ok(ArmijoStep {
        step: 0.0,
        backtracks: None,
        params: params.clone(),
        loss: loss_at,
    })
}

/// One row of the optimizer trace: the state at iteration `j` and the step
/// taken from it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub params: GmmParams,
    pub loss: f64,
    pub trace: Vec<TraceRecord>,
}

/// Runs up to `cfg.steps` Armijo descent iterations from `start`.
pub fn optimize(
    objective: &BellmanObjective<'_>,
    start: &GmmParams,
    cfg: &ArmijoConfig,
) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    let mut params = start.clone();
    let mut trace = Vec::new();
    if cfg.steps == 0 {
        let loss = objective.value(&params)?;
        return Ok(OptimizeOutcome { params, loss, trace });
    }
    let mut lg = objective.value_and_gradient(&params)?;
    for j in 0..cfg.steps {
        let grad_norm = product_inner(&params, &lg.grad, &lg.grad)?.sqrt();
        if !grad_norm.is_finite() || !lg.value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss or gradient at descent step {j}"
            )));
        }
        if grad_norm < cfg.grad_tol {
            trace.push(TraceRecord {
                iteration: j,
                loss: lg.value,
                grad_norm,
                step: 0.0,
            });
            break;
        }
        let accepted = armijo_search(objective, &params, &lg.grad, lg.value, cfg)?;
        trace.push(TraceRecord {
            iteration: j,
            loss: lg.value,
            grad_norm,
            step: accepted.step,
        });
        if accepted.stalled() {
            // The point did not move, so neither will the next gradient.
            break;
        }
        params = accepted.params;
        lg = objective.value_and_gradient(&params)?;
    }
    Ok(OptimizeOutcome {
        params,
        loss: lg.value,
        trace,
    })
}
