//! Geometry of the GMM-QF parameter space.
//!
//! A point is `(xi, m_1..m_K, C_1..C_K)` with `xi in R^K`, `m_k in R^Dz` and
//! `C_k` symmetric positive definite. The weight and mean blocks are flat
//! Euclidean spaces; each covariance block carries the Bures-Wasserstein
//! metric
//!
//! ```text
//! <G1, G2>_C = 1/2 tr(L_C(G1) G2),    C L_C(G) + L_C(G) C = G
//! ```
//!
//! and is retracted with the BW exponential
//! `exp_C(G) = C + G + L_C(G) C L_C(G)`.
//!
//! Every symmetric matrix is stored in full and re-symmetrized after each
//! arithmetic producer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Absolute entrywise tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Default lower bound on the eigenvalues of an [`SpdMatrix`].
pub const DEFAULT_SPD_FLOOR: f64 = 1e-10;

const EIGEN_MAX_ITER: usize = 10_000;

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::shape(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))
}

/// A symmetric positive-definite matrix together with its eigendecomposition.
///
/// The decomposition is computed once at construction; it backs the
/// positivity check, the Lyapunov solver and the inverse.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.mat == other.mat
    }
}

impl SpdMatrix {
    /// Validates symmetry and positivity with the default eigenvalue floor.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        Self::with_floor(mat, DEFAULT_SPD_FLOOR)
    }

    pub fn with_floor(mat: DMatrix<f64>, floor: f64) -> Result<Self> {
        check_square(&mat)?;
        let asym = max_asymmetry(&mat);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        Self::from_symmetric_part(mat, floor)
    }

    /// Symmetrizes `mat` and then checks positivity against `floor`.
    fn from_symmetric_part(mat: DMatrix<f64>, floor: f64) -> Result<Self> {
        let mat = symmetrize(mat);
        let eig = eigen(&mat)?;
        let min = eig.eigenvalues.min();
        if !(min > floor) {
            return Err(Error::NotPositiveDefinite(min));
        }
        Ok(SpdMatrix {
            mat,
            eigvals: eig.eigenvalues,
            eigvecs: eig.eigenvectors,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    /// `c * I`; panics if `c` is not strictly positive.
    pub fn scaled_identity(n: usize, c: f64) -> Self {
        assert!(c > 0.0 && n > 0, "scaled identity needs n > 0 and c > 0");
        SpdMatrix {
            mat: DMatrix::identity(n, n) * c,
            eigvals: DVector::from_element(n, c),
            eigvecs: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigvals.min()
    }

    /// `U f(diag(lambda)) U^T`.
    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut scaled = self.eigvecs.clone();
        for j in 0..n {
            let s = f(self.eigvals[j]);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        symmetrize(&scaled * self.eigvecs.transpose())
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.spectral_map(|l| 1.0 / l)
    }
}

/// A symmetric matrix, i.e. a tangent vector to the SPD cone.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTangent {
    mat: DMatrix<f64>,
}

impl SymTangent {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::shape(format!(
                "tangent must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let asym = max_asymmetry(&mat);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(SymTangent {
            mat: symmetrize(mat),
        })
    }

    /// Takes the symmetric part `(M + M^T) / 2` of an arbitrary square matrix.
    pub fn from_symmetric_part(mat: DMatrix<f64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "tangent must be square");
        SymTangent {
            mat: symmetrize(mat),
        }
    }

    pub fn zeros(n: usize) -> Self {
        SymTangent {
            mat: DMatrix::zeros(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymTangent {
            mat: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymTangent {
            mat: &self.mat * s,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mat.iter().all(|&v| v == 0.0)
    }
}

fn check_pair(c: &SpdMatrix, g: &SymTangent) -> Result<()> {
    if c.dim() != g.dim() {
        return Err(Error::shape(format!(
            "SPD point is {0}x{0} but tangent is {1}x{1}",
            c.dim(),
            g.dim()
        )));
    }
    Ok(())
}

/// Solves `C L + L C = G` in the eigenbasis of `C`:
/// `L~_ij = G~_ij / (lambda_i + lambda_j)` with `G~ = U^T G U`.
pub fn lyapunov_solve(c: &SpdMatrix, g: &SymTangent) -> Result<SymTangent> {
    check_pair(c, g)?;
    let u = &c.eigvecs;
    let mut rotated = u.transpose() * &g.mat * u;
    let n = c.dim();
    for j in 0..n {
        for i in 0..n {
            rotated[(i, j)] /= c.eigvals[i] + c.eigvals[j];
        }
    }
    let l = u * rotated * u.transpose();
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Lyapunov solve produced non-finite values".into()));
    }
    Ok(SymTangent::from_symmetric_part(l))
}

/// Bures-Wasserstein inner product `1/2 tr(L_C(G1) G2)`.
pub fn bw_inner(c: &SpdMatrix, g1: &SymTangent, g2: &SymTangent) -> Result<f64> {
    check_pair(c, g2)?;
    let l = lyapunov_solve(c, g1)?;
    // tr(A B) for symmetric A, B is the entrywise dot product.
    Ok(0.5 * l.mat.dot(&g2.mat))
}

/// Bures-Wasserstein exponential `C + G + L_C(G) C L_C(G)`.
///
/// Fails with [`Error::StepTooLarge`] when the result is not positive definite
/// above [`DEFAULT_SPD_FLOOR`].
pub fn bw_exp(c: &SpdMatrix, g: &SymTangent) -> Result<SpdMatrix> {
    check_pair(c, g)?;
    if g.is_zero() {
        return Ok(c.clone());
    }
    let l = lyapunov_solve(c, g)?;
    let out = &c.mat + &g.mat + &l.mat * &c.mat * &l.mat;
    match SpdMatrix::from_symmetric_part(out, DEFAULT_SPD_FLOOR) {
        Ok(spd) => Ok(spd),
        Err(Error::NotPositiveDefinite(min)) => Err(Error::StepTooLarge(min)),
        Err(e) => Err(e),
    }
}

/// A point `(xi, m_1..m_K, C_1..C_K)` on the parameter manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmParams {
    weights: DVector<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<SpdMatrix>,
}

impl GmmParams {
    pub fn new(weights: DVector<f64>, means: Vec<DVector<f64>>, covs: Vec<SpdMatrix>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::shape("a GMM needs at least one component"));
        }
        if means.len() != k || covs.len() != k {
            return Err(Error::shape(format!(
                "{} weights, {} means, {} covariances",
                k,
                means.len(),
                covs.len()
            )));
        }
        let dz = means[0].len();
        if dz == 0 {
            return Err(Error::shape("means must be non-empty"));
        }
        if means.iter().any(|m| m.len() != dz) || covs.iter().any(|c| c.dim() != dz) {
            return Err(Error::shape(format!(
                "all means and covariances must have dimension {dz}"
            )));
        }
        Ok(GmmParams {
            weights,
            means,
            covs,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covs(&self) -> &[SpdMatrix] {
        &self.covs
    }

    /// Same means and covariances, new weight vector.
    pub fn with_weights(&self, weights: DVector<f64>) -> Result<Self> {
        if weights.len() != self.n_components() {
            return Err(Error::shape("weight vector length must equal K"));
        }
        Ok(GmmParams {
            weights,
            means: self.means.clone(),
            covs: self.covs.clone(),
        })
    }

    /// Returns a copy with component `k`'s mean replaced.
    pub fn with_mean(&self, k: usize, mean: DVector<f64>) -> Result<Self> {
        if mean.len() != self.dim() {
            return Err(Error::shape("mean dimension mismatch"));
        }
        let mut out = self.clone();
        out.means[k] = mean;
        Ok(out)
    }

    /// Returns a copy with component `k`'s covariance replaced.
    pub fn with_cov(&self, k: usize, cov: SpdMatrix) -> Result<Self> {
        if cov.dim() != self.dim() {
            return Err(Error::shape("covariance dimension mismatch"));
        }
        let mut out = self.clone();
        out.covs[k] = cov;
        Ok(out)
    }

    /// Applies the same permutation to weights, means and covariances.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.n_components());
        GmmParams {
            weights: DVector::from_iterator(order.len(), order.iter().map(|&i| self.weights[i])),
            means: order.iter().map(|&i| self.means[i].clone()).collect(),
            covs: order.iter().map(|&i| self.covs[i].clone()).collect(),
        }
    }
}

/// A tangent vector `(theta, mu_1..mu_K, Gamma_1..Gamma_K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub theta: DVector<f64>,
    pub mu: Vec<DVector<f64>>,
    pub gamma: Vec<SymTangent>,
}

impl TangentVector {
    pub fn zeros(k: usize, dz: usize) -> Self {
        TangentVector {
            theta: DVector::zeros(k),
            mu: vec![DVector::zeros(dz); k],
            gamma: vec![SymTangent::zeros(dz); k],
        }
    }

    pub fn zeros_like(at: &GmmParams) -> Self {
        Self::zeros(at.n_components(), at.dim())
    }

    pub fn check_compatible(&self, at: &GmmParams) -> Result<()> {
        let k = at.n_components();
        let dz = at.dim();
        if self.theta.len() != k || self.mu.len() != k || self.gamma.len() != k {
            return Err(Error::shape(format!(
                "tangent vector has {}/{}/{} blocks, point has K = {k}",
                self.theta.len(),
                self.mu.len(),
                self.gamma.len()
            )));
        }
        if self.mu.iter().any(|m| m.len() != dz) || self.gamma.iter().any(|g| g.dim() != dz) {
            return Err(Error::shape(format!("tangent blocks must have Dz = {dz}")));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        TangentVector {
            theta: &self.theta * s,
            mu: self.mu.iter().map(|m| m * s).collect(),
            gamma: self.gamma.iter().map(|g| g.scaled(s)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.theta.iter().all(|&v| v == 0.0)
            && self.mu.iter().all(|m| m.iter().all(|&v| v == 0.0))
            && self.gamma.iter().all(SymTangent::is_zero)
    }
}

/// Product metric: Euclidean on the weight and mean blocks plus BW on each
/// covariance block.
pub fn product_inner(at: &GmmParams, u1: &TangentVector, u2: &TangentVector) -> Result<f64> {
    u1.check_compatible(at)?;
    u2.check_compatible(at)?;
    let mut acc = u1.theta.dot(&u2.theta);
    for (a, b) in u1.mu.iter().zip(&u2.mu) {
        acc += a.dot(b);
    }
    for ((c, a), b) in at.covs.iter().zip(&u1.gamma).zip(&u2.gamma) {
        acc += bw_inner(c, a, b)?;
    }
    Ok(acc)
}

/// Retraction `R_at(step * u)`: translation on the Euclidean blocks and the BW
/// exponential on each covariance.
pub fn retract(at: &GmmParams, step: f64, u: &TangentVector) -> Result<GmmParams> {
    u.check_compatible(at)?;
    if !(step >= 0.0) || !step.is_finite() {
        return Err(Error::Domain(format!("retraction step must be finite and >= 0, got {step}")));
    }
    let weights = &at.weights + &u.theta * step;
    let means = at
        .means
        .iter()
        .zip(&u.mu)
        .map(|(m, d)| m + d * step)
        .collect();
    let covs = at
        .covs
        .iter()
        .zip(&u.gamma)
        .map(|(c, g)| bw_exp(c, &g.scaled(step)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GmmParams {
        weights,
        means,
        covs,
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;

    pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        a.qr().q()
    }

    /// Random SPD matrix with eigenvalues log-uniform in `[lo, hi]`.
    pub fn random_spd<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> SpdMatrix {
        let q = random_orthogonal(rng, n);
        let d = DVector::from_fn(n, |_, _| (rng.random_range(lo.ln()..=hi.ln())).exp());
        let m = &q * DMatrix::from_diagonal(&d) * q.transpose();
        SpdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
    }
}
