//! The GMM-QF function class:
//! `Q(z) = sum_k xi_k exp(-(z - m_k)^T C_k^{-1} (z - m_k))`.
//!
//! Kernels are unnormalized and carry no 1/2 factor in the exponent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{GmmParams, SpdMatrix};

/// An embedded state-action pair `z = (s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateActionVector(pub DVector<f64>);

impl StateActionVector {
    pub fn from_slice(v: &[f64]) -> Self {
        StateActionVector(DVector::from_column_slice(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// `exp(-d^T C^{-1} d)` with `d = z - m`.
pub fn gaussian_kernel(z: &StateActionVector, m: &DVector<f64>, c: &SpdMatrix) -> Result<f64> {
    if z.len() != m.len() || m.len() != c.dim() {
        return Err(Error::shape(format!(
            "kernel input dims: z {}, mean {}, cov {}",
            z.len(),
            m.len(),
            c.dim()
        )));
    }
    let d = &z.0 - m;
    let q = d.dot(&(c.inverse() * &d));
    Ok((-q).exp())
}

/// `Q(z)` summed term by term.
pub fn q_eval(params: &GmmParams, z: &StateActionVector) -> Result<f64> {
    params
        .weights()
        .iter()
        .zip(params.means())
        .zip(params.covs())
        .try_fold(0.0, |acc, ((&w, m), c)| Ok(acc + w * gaussian_kernel(z, m, c)?))
}

/// Action index minimizing `Q(embed(s, a))` and the minimal value.
///
/// Ties go to the lowest index.
pub fn q_greedy_action<F>(params: &GmmParams, n_actions: usize, embed: F) -> Result<(usize, f64)>
where
    F: Fn(usize) -> StateActionVector,
{
    GmmEvaluator::new(params).greedy(n_actions, embed)
}

/// Cached per-component inverses for repeated evaluation at one parameter
/// point.
///
/// Inverses are stored row-major so the quadratic form runs over plain slices.
#[derive(Clone, Debug)]
pub struct GmmEvaluator<'a> {
    params: &'a GmmParams,
    inverses: Vec<Vec<f64>>,
}

impl<'a> GmmEvaluator<'a> {
    pub fn new(params: &'a GmmParams) -> Self {
        let inverses = params
            .covs()
            .iter()
            .map(|c| row_major(&c.inverse()))
            .collect();
        GmmEvaluator { params, inverses }
    }

    pub fn params(&self) -> &GmmParams {
        self.params
    }

    pub(crate) fn inverse(&self, k: usize) -> &[f64] {
        &self.inverses[k]
    }

    /// Kernel value for component `k`; `z` must have length Dz.
    #[inline]
    pub fn kernel(&self, k: usize, z: &[f64]) -> f64 {
        let m = self.params.means()[k].as_slice();
        let inv = &self.inverses[k];
        let n = m.len();
        debug_assert_eq!(z.len(), n);
        let mut q = 0.0;
        for i in 0..n {
            let di = z[i] - m[i];
            let row = &inv[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * (z[j] - m[j]);
            }
            q += di * acc;
        }
        (-q).exp()
    }

    pub fn q(&self, z: &[f64]) -> f64 {
        let w = self.params.weights();
        (0..w.len()).map(|k| w[k] * self.kernel(k, z)).sum()
    }

    pub fn check_dim(&self, z: &StateActionVector) -> Result<()> {
        if z.len() != self.params.dim() {
            return Err(Error::shape(format!(
                "state-action vector has length {}, params have Dz = {}",
                z.len(),
                self.params.dim()
            )));
        }
        Ok(())
    }

    pub fn greedy<F>(&self, n_actions: usize, embed: F) -> Result<(usize, f64)>
    where
        F: Fn(usize) -> StateActionVector,
    {
        if n_actions == 0 {
            return Err(Error::Domain("empty action set".into()));
        }
        let mut best = (0, f64::NAN);
        for a in 0..n_actions {
            let z = embed(a);
            self.check_dim(&z)?;
            let v = self.q(z.as_slice());
            if a == 0 || v < best.1 {
                best = (a, v);
            }
        }
        Ok(best)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * m.ncols());
    for i in 0..n {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}
