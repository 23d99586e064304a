//! Gaussian-mixture Q-functions (GMM-QFs) trained by policy iteration, with
//! policy evaluation posed as Bellman-residual minimization over the product
//! manifold `R^K x R^(Dz x K) x (S++)^K` under the Bures-Wasserstein metric.
//!
//! Layout, bottom-up:
//!
//! - [`manifold`]: SPD matrices, tangent vectors, the Lyapunov operator, the
//!   product metric and the BW retraction.
//! - [`gmm`]: kernel and Q-function evaluation, greedy action selection.
//! - [`bellman`]: the empirical Bellman-residual loss and its Riemannian
//!   gradient.
//! - [`optimizer`]: steepest descent with Armijo backtracking.
//! - [`env`]: inverted pendulum and mountain car, embeddings and rollouts.
//! - [`policy`]: the outer policy-iteration loop and validation rollouts.
//! - [`harness`]: experiment configs, seeded batches, CSV aggregation, K sweeps.
//! - [`gradcheck`]: finite-difference gradient diagnostics.

pub mod bellman;
pub mod env;
mod error;
pub mod gmm;
pub mod gradcheck;
pub mod harness;
pub mod manifold;
pub mod optimizer;
pub mod policy;

pub use bellman::{BellmanObjective, Dataset, LossGradient, Transition};
pub use env::{EnvModel, LossVariant, MountainCarState, PendulumState};
pub use error::{Error, Result};
pub use gmm::{GmmEvaluator, StateActionVector};
pub use harness::ExperimentConfig;
pub use manifold::{GmmParams, SpdMatrix, SymTangent, TangentVector};
pub use optimizer::ArmijoConfig;
pub use policy::IterationRecord;
