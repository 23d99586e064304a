//! Empirical Bellman-residual objective
//!
//! ```text
//! L(Omega) = sum_t [ g_t + alpha Q(z'_t) - Q(z_t) ]^2 = || g + Delta xi ||^2
//! Delta_tk = alpha G(z'_t | m_k, C_k) - G(z_t | m_k, C_k)
//! ```
//!
//! and its Riemannian gradient on the product manifold. The weight and mean
//! blocks are ordinary Euclidean gradients; the covariance block is the
//! Bures-Wasserstein gradient
//! `sum_t 4 delta_t xi_k (C_k^{-1} B_tk + B_tk C_k^{-1})`.
//!
//! [`loss_and_gradient`] evaluates every kernel once per `(t, k)` and shares
//! the values across all three blocks. The standalone block functions
//! ([`grad_xi`], [`grad_means`], [`grad_covs`]) follow the formulas literally
//! and exist mainly as a cross-check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gmm::{gaussian_kernel, q_eval, GmmEvaluator, StateActionVector};
use crate::manifold::{GmmParams, SymTangent, TangentVector};

/// One environment sample `(s, a, g, s')`; `action` indexes the task's
/// action set.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub loss: f64,
    pub next_state: Vec<f64>,
}

/// A batch of transitions with their embeddings `z_t = (s_t, a_t)` and
/// `z'_t = (s'_t, mu(s'_t))` under the evaluated policy `mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    transitions: Vec<Transition>,
    g: Vec<f64>,
    z: Vec<StateActionVector>,
    z_next: Vec<StateActionVector>,
}

impl Dataset {
    pub fn new(
        transitions: Vec<Transition>,
        z: Vec<StateActionVector>,
        z_next: Vec<StateActionVector>,
    ) -> Result<Self> {
        let g = transitions.iter().map(|t| t.loss).collect();
        let mut out = Self::from_samples(g, z, z_next)?;
        out.transitions = transitions;
        Ok(out)
    }

    /// A batch built directly from losses and embeddings, with no transition
    /// records attached.
    pub fn from_samples(
        g: Vec<f64>,
        z: Vec<StateActionVector>,
        z_next: Vec<StateActionVector>,
    ) -> Result<Self> {
        let t = g.len();
        if t == 0 {
            return Err(Error::shape("dataset must hold at least one sample"));
        }
        if z.len() != t || z_next.len() != t {
            return Err(Error::shape(format!(
                "{} losses, {} z vectors, {} z' vectors",
                t,
                z.len(),
                z_next.len()
            )));
        }
        let dz = z[0].len();
        if z.iter().chain(&z_next).any(|v| v.len() != dz) {
            return Err(Error::shape("all embedded vectors must share one length"));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("one-step losses must be finite".into()));
        }
        Ok(Dataset {
            transitions: Vec::new(),
            g,
            z,
            z_next,
        })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z[0].len()
    }

    /// Transition records; empty for batches built with [`Dataset::from_samples`].
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn losses(&self) -> &[f64] {
        &self.g
    }

    pub fn z(&self) -> &[StateActionVector] {
        &self.z
    }

    pub fn z_next(&self) -> &[StateActionVector] {
        &self.z_next
    }

    /// Recomputes every `z'_t` for a new evaluated policy.
    pub fn reembed_next<F>(&mut self, mut f: F) -> Result<()>
    where
        F: FnMut(&Transition) -> StateActionVector,
    {
        if self.transitions.is_empty() {
            return Err(Error::Domain("dataset has no transition records".into()));
        }
        let z_next: Vec<_> = self.transitions.iter().map(&mut f).collect();
        if z_next.iter().any(|v| v.len() != self.dim()) {
            return Err(Error::shape("re-embedded vectors changed length"));
        }
        self.z_next = z_next;
        Ok(())
    }

    fn check(&self, params: &GmmParams, alpha: f64) -> Result<()> {
        if self.dim() != params.dim() {
            return Err(Error::shape(format!(
                "dataset has Dz = {}, params have Dz = {}",
                self.dim(),
                params.dim()
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("discount must lie in [0, 1], got {alpha}")));
        }
        Ok(())
    }
}

/// Loss value and Riemannian gradient at one point.
#[derive(Clone, Debug)]
pub struct LossGradient {
    pub value: f64,
    pub grad: TangentVector,
}

/// `Delta_tk = alpha G(z'_t | m_k, C_k) - G(z_t | m_k, C_k)`.
pub fn delta_matrix(params: &GmmParams, data: &Dataset, alpha: f64) -> Result<DMatrix<f64>> {
    data.check(params, alpha)?;
    let ev = GmmEvaluator::new(params);
    Ok(DMatrix::from_fn(data.len(), params.n_components(), |t, k| {
        alpha * ev.kernel(k, data.z_next[t].as_slice()) - ev.kernel(k, data.z[t].as_slice())
    }))
}

/// `|| g + Delta xi ||^2`.
pub fn loss(params: &GmmParams, data: &Dataset, alpha: f64) -> Result<f64> {
    let r = residual(params, data, alpha)?;
    Ok(r.norm_squared())
}

fn residual(params: &GmmParams, data: &Dataset, alpha: f64) -> Result<DVector<f64>> {
    let delta = delta_matrix(params, data, alpha)?;
    Ok(DVector::from_column_slice(&data.g) + delta * params.weights())
}

/// `2 Delta^T (g + Delta xi)`.
pub fn grad_xi(params: &GmmParams, data: &Dataset, alpha: f64) -> Result<DVector<f64>> {
    let delta = delta_matrix(params, data, alpha)?;
    let r = DVector::from_column_slice(&data.g) + &delta * params.weights();
    Ok(delta.transpose() * r * 2.0)
}

/// Per-sample residuals `delta_t = g_t + alpha Q(z'_t) - Q(z_t)`.
fn sample_residuals(params: &GmmParams, data: &Dataset, alpha: f64) -> Result<Vec<f64>> {
    data.check(params, alpha)?;
    (0..data.len())
        .map(|t| Ok(data.g[t] + alpha * q_eval(params, &data.z_next[t])? - q_eval(params, &data.z[t])?))
        .collect()
}

/// `sum_t 4 delta_t xi_k C_k^{-1} [alpha (z'_t - m_k) G(z'_t) - (z_t - m_k) G(z_t)]`.
pub fn grad_means(params: &GmmParams, data: &Dataset, alpha: f64) -> Result<Vec<DVector<f64>>> {
    let deltas = sample_residuals(params, data, alpha)?;
    let mut out = Vec::with_capacity(params.n_components());
    for k in 0..params.n_components() {
        let (m, c, xi) = (&params.means()[k], &params.covs()[k], params.weights()[k]);
        let inv = c.inverse();
        let mut acc = DVector::zeros(params.dim());
        for t in 0..data.len() {
            let dn = &data.z_next[t].0 - m;
            let d = &data.z[t].0 - m;
            let inner = dn * (alpha * gaussian_kernel(&data.z_next[t], m, c)?)
                - d * gaussian_kernel(&data.z[t], m, c)?;
            acc += &inv * inner * (4.0 * deltas[t] * xi);
        }
        out.push(acc);
    }
    Ok(out)
}

/// `sum_t 4 delta_t xi_k (C_k^{-1} B_tk + B_tk C_k^{-1})` with
/// `B_tk = alpha d'd'^T G(z'_t) - d d^T G(z_t)`.
pub fn grad_covs(params: &GmmParams, data: &Dataset, alpha: f64) -> Result<Vec<SymTangent>> {
    let deltas = sample_residuals(params, data, alpha)?;
    let mut out = Vec::with_capacity(params.n_components());
    for k in 0..params.n_components() {
        let (m, c, xi) = (&params.means()[k], &params.covs()[k], params.weights()[k]);
        let inv = c.inverse();
        let mut acc = DMatrix::zeros(params.dim(), params.dim());
        for t in 0..data.len() {
            let dn = &data.z_next[t].0 - m;
            let d = &data.z[t].0 - m;
            let b = &dn * dn.transpose() * (alpha * gaussian_kernel(&data.z_next[t], m, c)?)
                - &d * d.transpose() * gaussian_kernel(&data.z[t], m, c)?;
            acc += (&inv * &b + &b * &inv) * (4.0 * deltas[t] * xi);
        }
        out.push(SymTangent::from_symmetric_part(acc));
    }
    Ok(out)
}

/// Loss and full gradient in one pass over the data.
pub fn loss_and_gradient(params: &GmmParams, data: &Dataset, alpha: f64) -> Result<LossGradient> {
    BellmanObjective::new(data, alpha)?.value_and_gradient(params)
}

/// The Bellman-residual objective for a fixed dataset and discount.
#[derive(Clone, Copy, Debug)]
pub struct BellmanObjective<'a> {
    data: &'a Dataset,
    alpha: f64,
}

impl<'a> BellmanObjective<'a> {
    pub fn new(data: &'a Dataset, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("discount must lie in [0, 1], got {alpha}")));
        }
        Ok(BellmanObjective { data, alpha })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Loss only, summed per sample in dataset order.
    pub fn value(&self, params: &GmmParams) -> Result<f64> {
        self.data.check(params, self.alpha)?;
        let ev = GmmEvaluator::new(params);
        let mut total = 0.0;
        for t in 0..self.data.len() {
            let r = self.data.g[t] + self.alpha * ev.q(self.data.z_next[t].as_slice())
                - ev.q(self.data.z[t].as_slice());
            total += r * r;
        }
        Ok(total)
    }

    pub fn value_and_gradient(&self, params: &GmmParams) -> Result<LossGradient> {
        self.data.check(params, self.alpha)?;
        let alpha = self.alpha;
        let k_count = params.n_components();
        let dz = params.dim();
        let ev = GmmEvaluator::new(params);
        let xi = params.weights();

        let mut kz = vec![0.0; k_count];
        let mut kn = vec![0.0; k_count];
        let mut value = 0.0;
        let mut g_xi = DVector::zeros(k_count);
        let mut mean_acc = vec![vec![0.0; dz]; k_count];
        let mut cov_acc = vec![vec![0.0; dz * dz]; k_count];

        for t in 0..self.data.len() {
            let z = self.data.z[t].as_slice();
            let zn = self.data.z_next[t].as_slice();
            let mut r = self.data.g[t];
            for k in 0..k_count {
                kz[k] = ev.kernel(k, z);
                kn[k] = ev.kernel(k, zn);
                r += xi[k] * (alpha * kn[k] - kz[k]);
            }
            value += r * r;
            for k in 0..k_count {
                g_xi[k] += 2.0 * r * (alpha * kn[k] - kz[k]);
                if xi[k] == 0.0 {
                    continue;
                }
                let m = params.means()[k].as_slice();
                let wn = r * alpha * kn[k];
                let wz = r * kz[k];
                let (ma, ca) = (&mut mean_acc[k], &mut cov_acc[k]);
                for i in 0..dz {
                    let dni = zn[i] - m[i];
                    let di = z[i] - m[i];
                    ma[i] += wn * dni - wz * di;
                    for j in 0..dz {
                        ca[i * dz + j] += wn * dni * (zn[j] - m[j]) - wz * di * (z[j] - m[j]);
                    }
                }
            }
        }

        let mut mu = Vec::with_capacity(k_count);
        let mut gamma = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let inv = DMatrix::from_row_slice(dz, dz, ev.inverse(k));
            let scale = 4.0 * xi[k];
            mu.push(&inv * DVector::from_column_slice(&mean_acc[k]) * scale);
            let b = DMatrix::from_row_slice(dz, dz, &cov_acc[k]);
            gamma.push(SymTangent::from_symmetric_part((&inv * &b + &b * &inv) * scale));
        }

        Ok(LossGradient {
            value,
            grad: TangentVector {
                theta: g_xi,
                mu,
                gamma,
            },
        })
    }
}
