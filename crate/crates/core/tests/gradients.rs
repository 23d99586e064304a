mod common;

use common::{fd_errors, random_instance, small_instance};
use gmmqf_core::bellman::{grad_covs, grad_means, grad_xi, loss, loss_and_gradient};
use gmmqf_core::manifold::{product_inner, retract};
use gmmqf_core::TangentVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn loss_matches_reference_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..30 {
        let inst = small_instance(&mut rng);
        let want = inst.oracle_loss(&inst.params);
        let got = loss(&inst.params, &inst.dataset(), inst.alpha).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn finite_differences_agree_with_analytic_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let inst = small_instance(&mut rng);
        let (w, m, c) = fd_errors(&inst, 4, &mut rng);
        assert!(w < 1e-6 && m < 1e-6 && c < 1e-5, "weights {w:e} means {m:e} covs {c:e}");
    }
}

#[test]
fn fused_gradient_matches_block_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 12, 3, 3);
        let data = inst.dataset();
        let lg = loss_and_gradient(&inst.params, &data, inst.alpha).unwrap();
        let xi = grad_xi(&inst.params, &data, inst.alpha).unwrap();
        let mu = grad_means(&inst.params, &data, inst.alpha).unwrap();
        let gamma = grad_covs(&inst.params, &data, inst.alpha).unwrap();
        assert!((&lg.grad.theta - xi).amax() < 1e-10);
        for k in 0..3 {
            assert!((&lg.grad.mu[k] - &mu[k]).amax() < 1e-10);
            assert!((lg.grad.gamma[k].matrix() - gamma[k].matrix()).amax() < 1e-10);
        }
    }
}

#[test]
fn gradient_pairs_with_loss_along_retraction() {
    // d/dt L(R(t U)) at t = 0 equals <grad, U>.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 8, 2, 3);
        let data = inst.dataset();
        let lg = loss_and_gradient(&inst.params, &data, inst.alpha).unwrap();
        let other = random_instance(&mut rng, 1, 2, 3);
        let dir = TangentVector {
            theta: other.params.weights().clone(),
            mu: other.params.means().to_vec(),
            gamma: (0..2)
                .map(|_| gmmqf_core::SymTangent::new(common::random_symmetric(&mut rng, 3)).unwrap())
                .collect(),
        };
        let h = 1e-6;
        let at = |t: f64| {
            let (s, u) = if t >= 0.0 { (t, dir.clone()) } else { (-t, dir.scaled(-1.0)) };
            inst.oracle_loss(&retract(&inst.params, s, &u).unwrap())
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let paired = product_inner(&inst.params, &lg.grad, &dir).unwrap();
        assert!((fd - paired).abs() <= 1e-5 * paired.abs().max(1.0), "{fd} vs {paired}");
    }
}
