//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls the library's evaluation code: kernels go through a
//! Cholesky solve and losses are plain per-sample loops.

#![allow(dead_code)]

use gmmqf_core::bellman::Dataset;
use gmmqf_core::{GmmParams, SpdMatrix, StateActionVector};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn kernel(z: &DVector<f64>, m: &DVector<f64>, c: &DMatrix<f64>) -> f64 {
    let d = z - m;
    let y = c.clone().cholesky().expect("SPD").solve(&d);
    (-d.dot(&y)).exp()
}

pub fn q(params: &GmmParams, z: &DVector<f64>) -> f64 {
    (0..params.n_components())
        .map(|k| params.weights()[k] * kernel(z, &params.means()[k], params.covs()[k].matrix()))
        .sum()
}

pub fn loss(params: &GmmParams, g: &[f64], z: &[DVector<f64>], zn: &[DVector<f64>], alpha: f64) -> f64 {
    (0..g.len())
        .map(|t| {
            let r = g[t] + alpha * q(params, &zn[t]) - q(params, &z[t]);
            r * r
        })
        .sum()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-r..r))
}

/// Haar-ish orthogonal matrix from a QR factorization.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

/// SPD matrix with eigenvalues log-uniform in `[lo, hi]`, including both
/// endpoints when `n >= 2` so the condition number is exactly `hi / lo`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, n);
    let eig = DVector::from_fn(n, |i, _| match i {
        0 => lo,
        1 => hi,
        _ => (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp(),
    });
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

pub struct Instance {
    pub params: GmmParams,
    pub g: Vec<f64>,
    pub z: Vec<DVector<f64>>,
    pub zn: Vec<DVector<f64>>,
    pub alpha: f64,
}

impl Instance {
    pub fn dataset(&self) -> Dataset {
        let wrap = |v: &[DVector<f64>]| v.iter().map(|x| StateActionVector(x.clone())).collect();
        Dataset::from_samples(self.g.clone(), wrap(&self.z), wrap(&self.zn)).unwrap()
    }

    pub fn oracle_loss(&self, params: &GmmParams) -> f64 {
        loss(params, &self.g, &self.z, &self.zn, self.alpha)
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, t: usize, k: usize, dz: usize) -> Instance {
    let weights = random_vec(rng, k, 2.0);
    let means = (0..k).map(|_| random_vec(rng, dz, 1.0)).collect();
    let covs = (0..k)
        .map(|_| SpdMatrix::new(random_spd(rng, dz, 0.2, 2.0)).unwrap())
        .collect();
    Instance {
        params: GmmParams::new(weights, means, covs).unwrap(),
        g: (0..t).map(|_| rng.random_range(0.0..1.0)).collect(),
        z: (0..t).map(|_| random_vec(rng, dz, 1.0)).collect(),
        zn: (0..t).map(|_| random_vec(rng, dz, 1.0)).collect(),
        alpha: rng.random_range(0.5..0.99),
    }
}

/// Instance with `T <= 10`, `K <= 3`, `Dz <= 4` drawn at random.
pub fn small_instance<R: Rng>(rng: &mut R) -> Instance {
    let t = rng.random_range(1..=10);
    let k = rng.random_range(1..=3);
    let dz = rng.random_range(1..=4);
    random_instance(rng, t, k, dz)
}

pub fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1e-300)
}

/// Central-difference derivative of `f` at zero.
pub fn central<F: Fn(f64) -> f64>(f: F, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

/// Worst relative finite-difference error per block
/// `(weights, means, covariances)` for one instance.
pub fn fd_errors<R: Rng>(inst: &Instance, directions: usize, rng: &mut R) -> (f64, f64, f64) {
    use gmmqf_core::bellman::loss_and_gradient;
    use gmmqf_core::manifold::bw_inner;
    use gmmqf_core::SymTangent;

    let p = &inst.params;
    let lg = loss_and_gradient(p, &inst.dataset(), inst.alpha).unwrap();
    let h = 1e-6;

    let mut ew = 0.0_f64;
    let scale = lg.grad.theta.amax();
    for k in 0..p.n_components() {
        let fd = central(
            |s| {
                let mut w = p.weights().clone();
                w[k] += s;
                inst.oracle_loss(&p.with_weights(w).unwrap())
            },
            h,
        );
        ew = ew.max(rel(lg.grad.theta[k], fd, scale));
    }

    let mut em = 0.0_f64;
    for k in 0..p.n_components() {
        let scale = lg.grad.mu[k].amax();
        for i in 0..p.dim() {
            let fd = central(
                |s| {
                    let mut m = p.means()[k].clone();
                    m[i] += s;
                    inst.oracle_loss(&p.with_mean(k, m).unwrap())
                },
                h,
            );
            em = em.max(rel(lg.grad.mu[k][i], fd, scale));
        }
    }

    let mut ec = 0.0_f64;
    for k in 0..p.n_components() {
        let c = &p.covs()[k];
        let gk = &lg.grad.gamma[k];
        let gnorm = bw_inner(c, gk, gk).unwrap().sqrt();
        for _ in 0..directions {
            let dir = SymTangent::new(random_symmetric(rng, c.dim())).unwrap();
            let fd = central(
                |s| {
                    let m = c.matrix() + dir.matrix() * s;
                    let m = (&m + m.transpose()) * 0.5;
                    inst.oracle_loss(&p.with_cov(k, SpdMatrix::new(m).unwrap()).unwrap())
                },
                h,
            );
            let paired = bw_inner(c, gk, &dir).unwrap();
            let scale = (gnorm * bw_inner(c, &dir, &dir).unwrap().sqrt()).max(paired.abs());
            ec = ec.max(rel(paired, fd, scale));
        }
    }
    (ew, em, ec)
}
