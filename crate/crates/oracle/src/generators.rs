//! Seeded random inputs for the oracle checks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{ell, exact_svd, ExactSvd};

pub fn gaussian<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(rng))
}

/// `n x k` with orthonormal columns, Haar-distributed up to column signs.
pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(k <= n, "cannot fit {k} orthonormal columns in dimension {n}");
    gaussian(n, k, rng).qr().q()
}

pub fn random_projector<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let q = random_orthonormal(n, k, rng);
    &q * q.transpose()
}

/// `U diag(sigma) V^T` for random orthonormal `U`, `V`.
pub fn planted_spectrum<R: Rng + ?Sized>(m: usize, n: usize, sigma: &[f64], rng: &mut R) -> DMatrix<f64> {
    let r = sigma.len();
    let u = random_orthonormal(m, r, rng);
    let mut v = random_orthonormal(n, r, rng);
    for (c, s) in sigma.iter().enumerate() {
        v.column_mut(c).scale_mut(*s);
    }
    u * v.transpose()
}

/// `Pi_k` with `v_k` turned by `theta` towards `v_{k+1}`.
///
/// For it, `||A_k||_F^2 - ||A Pi||_F^2 = sin^2(theta) (sigma_k^2 - sigma_{k+1}^2)`.
pub fn rotated_projector(svd: &ExactSvd, k: usize, theta: f64) -> DMatrix<f64> {
    assert!(k >= 1 && k < svd.sigma.len());
    let mut basis = svd.v.columns(0, k).clone_owned();
    let turned = svd.v.column(k - 1) * theta.cos() + svd.v.column(k) * theta.sin();
    basis.set_column(k - 1, &turned);
    &basis * basis.transpose()
}

/// Projector onto the span of `V_k + noise * G`.
pub fn perturbed_projector<R: Rng + ?Sized>(svd: &ExactSvd, k: usize, noise: f64, rng: &mut R) -> DMatrix<f64> {
    let n = svd.v.nrows();
    let basis = svd.v.columns(0, k) + gaussian(n, k, rng) * noise;
    let q = basis.qr().q();
    &q * q.transpose()
}

/// `Pi - P_1` where `Pi` is a perturbed rank-`k` projector of a planted
/// matrix and `P_1` projects onto its singular directions above
/// `sigma_k (1 + eta)`.
pub fn projector_difference<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let r = n.min(6);
    let mut sigma: Vec<f64> = (0..r).map(|_| rng.random_range(0.5..10.0)).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let a = planted_spectrum(n, n, &sigma, rng);
    let svd = exact_svd(&a);
    let k = rng.random_range(1..r);
    let eta = rng.random_range(0.1..1.0);
    let pi = perturbed_projector(&svd, k, rng.random_range(0.0..0.3), rng);
    let p1 = svd.top_projector(ell(&svd.sigma, svd.sigma[k - 1] * (1.0 + eta)));
    pi - p1
}

/// A feasible instance of the energy system: `(sigma, a, k, eps, eta)`.
///
/// Starts from the indicator of the first `k` entries, moves random mass
/// between entries, and sets `eps` to the smallest value that keeps the
/// energy premise.
pub fn feasible_system<R: Rng + ?Sized>(rng: &mut R) -> (Vec<f64>, Vec<f64>, usize, f64, f64) {
    let n = rng.random_range(2..40);
    let mut sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0f64)).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let k = rng.random_range(1..n);
    let mut a: Vec<f64> = (0..n).map(|i| (i < k) as u8 as f64).collect();
    for _ in 0..rng.random_range(0..3 * n) {
        let from = rng.random_range(0..n);
        let to = rng.random_range(0..n);
        let amount = rng.random_range(0.0..1.0) * a[from].min(1.0 - a[to]);
        a[from] -= amount;
        a[to] += amount;
    }
    let sk2 = sigma[k - 1] * sigma[k - 1];
    let top: f64 = sigma[..k].iter().map(|s| s * s).sum();
    let captured: f64 = sigma.iter().zip(&a).map(|(s, x)| s * s * x).sum();
    let eps = if sk2 > 0.0 { ((top - captured) / sk2).max(0.0) * (1.0 + 1e-12) } else { 0.0 };
    let eta = rng.random_range(0.01..=1.0);
    (sigma, a, k, eps, eta)
}
