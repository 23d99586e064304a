//! Finite-difference diagnostics for the Bellman-residual gradient.
//!
//! Weight and mean blocks are compared coordinate-wise against central
//! differences of the loss. The covariance block is a Riemannian gradient, so
//! it is checked through the metric pairing: for a symmetric direction
//! `Gamma`, `<grad_C, Gamma>_C` must equal `d/dt L(C + t Gamma)` at `t = 0`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bellman::{loss, loss_and_gradient, Dataset};
use crate::error::Result;
use crate::gmm::StateActionVector;
use crate::manifold::{bw_inner, GmmParams, SpdMatrix, SymTangent};

/// Finite-difference step for every block.
pub const FD_STEP: f64 = 1e-6;
pub const EUCLIDEAN_TOL: f64 = 1e-6;
pub const COVARIANCE_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub instances: usize,
    pub max_rel_weights: f64,
    pub max_rel_means: f64,
    pub max_rel_covs: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_weights <= EUCLIDEAN_TOL
            && self.max_rel_means <= EUCLIDEAN_TOL
            && self.max_rel_covs <= COVARIANCE_TOL
    }
}

/// A random instance with `T <= 10`, `K <= 3`, `Dz <= 4`.
pub fn random_instance<R: Rng>(rng: &mut R) -> (GmmParams, Dataset, f64) {
    let t = rng.random_range(1..=10);
    let k = rng.random_range(1..=3);
    let dz = rng.random_range(1..=4);
    let mut vec = |n: usize, r: f64| DVector::from_fn(n, |_, _| rng.random_range(-r..r));
    let weights = vec(k, 2.0);
    let means: Vec<_> = (0..k).map(|_| vec(dz, 1.0)).collect();
    let z: Vec<_> = (0..t).map(|_| StateActionVector(vec(dz, 1.0))).collect();
    let z_next: Vec<_> = (0..t).map(|_| StateActionVector(vec(dz, 1.0))).collect();
    let covs = (0..k)
        .map(|_| {
            let a = DMatrix::from_fn(dz, dz, |_, _| rng.random_range(-1.0..1.0));
            SpdMatrix::new(symmetric(&a * a.transpose() * 0.5 + DMatrix::identity(dz, dz) * 0.3)).unwrap()
        })
        .collect();
    let g = (0..t).map(|_| rng.random_range(0.0..1.0)).collect();
    let alpha = rng.random_range(0.5..0.99);
    (
        GmmParams::new(weights, means, covs).unwrap(),
        Dataset::from_samples(g, z, z_next).unwrap(),
        alpha,
    )
}

fn symmetric(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn rel_err(analytic: f64, numeric: f64, scale: f64) -> f64 {
    (analytic - numeric).abs() / scale.max(1e-12)
}

/// Checks one instance; returns the worst relative error per block.
pub fn check_instance<R: Rng>(
    params: &GmmParams,
    data: &Dataset,
    alpha: f64,
    directions: usize,
    rng: &mut R,
) -> Result<(f64, f64, f64)> {
    let lg = loss_and_gradient(params, data, alpha)?;
    let h = FD_STEP;

    let scale = lg.grad.theta.amax();
    let mut worst_w = 0.0_f64;
    for k in 0..params.n_components() {
        let bump = |s: f64| {
            let mut w = params.weights().clone();
            w[k] += s;
            loss(&params.with_weights(w).unwrap(), data, alpha)
        };
        let fd = (bump(h)? - bump(-h)?) / (2.0 * h);
        worst_w = worst_w.max(rel_err(lg.grad.theta[k], fd, scale));
    }

    let mut worst_m = 0.0_f64;
    for k in 0..params.n_components() {
        let scale = lg.grad.mu[k].amax();
        for i in 0..params.dim() {
            let bump = |s: f64| {
                let mut m = params.means()[k].clone();
                m[i] += s;
                loss(&params.with_mean(k, m).unwrap(), data, alpha)
            };
            let fd = (bump(h)? - bump(-h)?) / (2.0 * h);
            worst_m = worst_m.max(rel_err(lg.grad.mu[k][i], fd, scale));
        }
    }

    let mut worst_c = 0.0_f64;
    for k in 0..params.n_components() {
        let c = &params.covs()[k];
        let grad_c = &lg.grad.gamma[k];
        let grad_norm = bw_inner(c, grad_c, grad_c)?.sqrt();
        for _ in 0..directions {
            let dir = SymTangent::from_symmetric_part(DMatrix::from_fn(c.dim(), c.dim(), |_, _| {
                rng.random_range(-1.0..1.0)
            }));
            let bump = |s: f64| {
                let moved = SpdMatrix::new(symmetric(c.matrix() + dir.matrix() * s)).unwrap();
                loss(&params.with_cov(k, moved).unwrap(), data, alpha)
            };
            let fd = (bump(h)? - bump(-h)?) / (2.0 * h);
            let paired = bw_inner(c, grad_c, &dir)?;
            // Cauchy-Schwarz bound on |paired| sets the scale.
            let scale = grad_norm * bw_inner(c, &dir, &dir)?.sqrt();
            worst_c = worst_c.max(rel_err(paired, fd, scale.max(paired.abs())));
        }
    }
    Ok((worst_w, worst_m, worst_c))
}

/// Runs `instances` random checks from `seed`.
pub fn run_gradient_check(seed: u64, instances: usize, directions: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        instances,
        ..Default::default()
    };
    for _ in 0..instances {
        let (params, data, alpha) = random_instance(&mut rng);
        let (w, m, c) = check_instance(&params, &data, alpha, directions, &mut rng)?;
        report.max_rel_weights = report.max_rel_weights.max(w);
        report.max_rel_means = report.max_rel_means.max(m);
        report.max_rel_covs = report.max_rel_covs.max(c);
    }
    Ok(report)
}
