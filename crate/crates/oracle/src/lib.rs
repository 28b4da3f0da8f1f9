//! Dense reference computations for checking `sketchrec` against exact
//! answers: SVD truncations, the `A_{sigma,eta}` family, exact sampling
//! distributions, and the numeric bounds the sampler relies on.
//!
//! Everything here is `O(mn min(m, n))` or worse and meant for matrices of a
//! few hundred rows at most.

pub mod calibration;
pub mod generators;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("undefined distribution: {0}")]
    UndefinedDistribution(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Thin SVD `A = U diag(sigma) V^T` with `sigma` nonincreasing.
#[derive(Clone, Debug)]
pub struct ExactSvd {
    /// `m x r`, orthonormal columns.
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    /// `n x r`, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl ExactSvd {
    pub fn rank(&self, tol: f64) -> usize {
        self.sigma.iter().filter(|&&s| s > tol).count()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (c, s) in self.sigma.iter().enumerate() {
            us.column_mut(c).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Projector onto the span of the first `k` right singular vectors.
    pub fn top_projector(&self, k: usize) -> DMatrix<f64> {
        let vk = self.v.columns(0, k.min(self.sigma.len()));
        &vk * vk.transpose()
    }
}

pub fn exact_svd(a: &DMatrix<f64>) -> ExactSvd {
    let svd = a.clone().try_svd(true, true, f64::EPSILON, 1_000_000).expect("dense SVD did not converge");
    let u = svd.u.expect("U requested");
    let vt = svd.v_t.expect("V^T requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let r = order.len();
    let mut uu = DMatrix::zeros(a.nrows(), r);
    let mut vv = DMatrix::zeros(a.ncols(), r);
    let mut sigma = Vec::with_capacity(r);
    for (c, &l) in order.iter().enumerate() {
        uu.set_column(c, &u.column(l));
        vv.set_column(c, &vt.row(l).transpose());
        sigma.push(svd.singular_values[l]);
    }
    ExactSvd { u: uu, sigma, v: vv }
}

/// `A_k = A Pi_k`.
pub fn exact_ak(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    a * exact_svd(a).top_projector(k)
}

/// Number of singular values at least `lambda`.
pub fn ell(sigma: &[f64], lambda: f64) -> usize {
    sigma.iter().filter(|&&s| s >= lambda).count()
}

pub fn exact_ell(a: &DMatrix<f64>, lambda: f64) -> usize {
    ell(&exact_svd(a).sigma, lambda)
}

/// `||A - A_k||_F^2` from the singular values.
pub fn tail_energy(sigma: &[f64], k: usize) -> f64 {
    sigma.iter().skip(k).map(|s| s * s).sum()
}

/// The closest member `A P` of the family found by [`nearest_a_sigma_eta`].
#[derive(Clone, Debug)]
pub struct FamilyFit {
    pub distance: f64,
    /// `A P`.
    pub witness: DMatrix<f64>,
    /// `P = Pi_{sigma(1+eta)} + Pi_E`, an orthogonal projector.
    pub projector: DMatrix<f64>,
    /// Directions kept outright, free, and discarded.
    pub high: usize,
    pub middle: usize,
    pub low: usize,
    /// `dim im Pi_E`.
    pub chosen: usize,
}

/// Minimizes `||M - A P||_F` over `P = Pi_{sigma(1+eta)} + Pi_E` with
/// `Pi_E` any orthogonal projector inside the span of the right singular
/// vectors whose singular values lie in `[sigma(1-eta), sigma(1+eta))`.
///
/// Over projectors the problem is exact: with `R = M - A Pi_hi` and
/// `R~ = U_mid^T R V_mid`, the objective is
/// `||R||^2 + tr(G Q)` for `G = S^2 - (S R~ + R~^T S)` (`S` the middle
/// singular values) and `Q` the projector in middle coordinates, minimized by
/// projecting onto the negative eigenspace of `G`. Allowing the rest of the
/// family (`0 <= P <= I` on the middle block) can only shrink the distance,
/// so the result is an upper bound on the distance to the whole family.
pub fn nearest_a_sigma_eta(a: &DMatrix<f64>, sigma: f64, eta: f64, m: &DMatrix<f64>) -> Result<FamilyFit> {
    if m.shape() != a.shape() {
        return Err(OracleError::DimensionMismatch(format!("A is {:?}, M is {:?}", a.shape(), m.shape())));
    }
    if !(sigma > 0.0) || !(0.0..=1.0).contains(&eta) {
        return Err(OracleError::InvalidParameter(format!("need sigma > 0 and eta in [0, 1], got {sigma}, {eta}")));
    }
    let svd = exact_svd(a);
    let high = ell(&svd.sigma, sigma * (1.0 + eta));
    let upto = ell(&svd.sigma, sigma * (1.0 - eta));
    let middle = upto - high;
    let vh = svd.v.columns(0, high);
    let mut p = &vh * vh.transpose();
    let mut chosen = 0;
    if middle > 0 {
        let r = m - a * &p;
        let um = svd.u.columns(high, middle);
        let vm = svd.v.columns(high, middle);
        let rt = um.transpose() * &r * vm;
        let s = DMatrix::from_diagonal(&DVector::from_iterator(middle, svd.sigma[high..upto].iter().copied()));
        let g = &s * &s - (&s * &rt + rt.transpose() * &s);
        let g = (&g + g.transpose()) * 0.5;
        let eig = SymmetricEigen::new(g);
        let mut q = DMatrix::zeros(middle, middle);
        for (l, lambda) in eig.eigenvalues.iter().enumerate() {
            if *lambda < 0.0 {
                let e = eig.eigenvectors.column(l);
                q += &e * e.transpose();
                chosen += 1;
            }
        }
        p += &vm * q * vm.transpose();
    }
    let witness = a * &p;
    let distance = (m - &witness).norm();
    Ok(FamilyFit { distance, witness, projector: p, high, middle, low: svd.sigma.len() - upto, chosen })
}

/// Result of rounding a near-idempotent symmetric matrix to a projector.
#[derive(Clone, Debug)]
pub struct NearProjector {
    /// `||M^2 - M||_F`.
    pub epsilon: f64,
    /// `||M - P||_F` for the rounded projector `P`.
    pub distance: f64,
    /// `epsilon + 4 epsilon^2`.
    pub bound: f64,
    pub projector: DMatrix<f64>,
}

impl NearProjector {
    pub fn holds(&self) -> bool {
        self.distance <= self.bound + 1e-12 * (1.0 + self.bound)
    }
}

/// Rounds the eigenvalues of a symmetric `mat` to `{0, 1}` (at one half) and
/// reports the distance next to `epsilon + 4 epsilon^2`.
pub fn check_near_projector(mat: &DMatrix<f64>) -> Result<NearProjector> {
    if !mat.is_square() {
        return Err(OracleError::DimensionMismatch(format!("{:?} is not square", mat.shape())));
    }
    let asym = (mat - mat.transpose()).norm();
    if asym > 1e-10 * (1.0 + mat.norm()) {
        return Err(OracleError::NotHermitian(asym));
    }
    let epsilon = (mat * mat - mat).norm();
    let eig = SymmetricEigen::new(mat.clone());
    let n = mat.nrows();
    let mut projector = DMatrix::zeros(n, n);
    for (l, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda >= 0.5 {
            let e = eig.eigenvectors.column(l);
            projector += &e * e.transpose();
        }
    }
    let distance = (mat - &projector).norm();
    Ok(NearProjector { epsilon, distance, bound: epsilon + 4.0 * epsilon * epsilon, projector })
}

/// The constant in the bound-transfer inequality.
pub const BOUND_TRANSFER_CONSTANT: f64 = 1602.0;

#[derive(Clone, Debug, PartialEq)]
pub enum BoundTransfer {
    /// The premise or the parameter range failed; nothing to check.
    Skipped(String),
    /// `lhs = dist(A Pi, A_{sigma_k,eta})^2`, `rhs = 1602 eps sigma_k^2 / eta`.
    Checked { lhs: f64, rhs: f64, premise_slack: f64 },
}

impl BoundTransfer {
    pub fn holds(&self) -> Option<bool> {
        match self {
            BoundTransfer::Skipped(_) => None,
            BoundTransfer::Checked { lhs, rhs, .. } => Some(lhs <= rhs),
        }
    }
}

/// Checks that a rank-`k` projector `pi` nearly capturing `||A_k||_F^2`
/// puts `A Pi` near the `A_{sigma_k,eta}` family.
pub fn check_bound_transfer(a: &DMatrix<f64>, pi: &DMatrix<f64>, eps: f64, eta: f64) -> Result<BoundTransfer> {
    let n = a.ncols();
    if pi.shape() != (n, n) {
        return Err(OracleError::DimensionMismatch(format!("projector is {:?}, need {n}x{n}", pi.shape())));
    }
    let idem = (pi * pi - pi).norm() + (pi - pi.transpose()).norm();
    if idem > 1e-8 {
        return Err(OracleError::InvalidParameter(format!("not an orthogonal projector (defect {idem:e})")));
    }
    if !(eps <= eta && eta <= 1.0 && eps >= 0.0 && eta > 0.0) {
        return Ok(BoundTransfer::Skipped(format!("need 0 <= eps <= eta <= 1, got eps={eps}, eta={eta}")));
    }
    let k = pi.trace().round() as usize;
    let svd = exact_svd(a);
    if k == 0 || k > svd.sigma.len() {
        return Ok(BoundTransfer::Skipped(format!("projector rank {k} out of range")));
    }
    let sk = svd.sigma[k - 1];
    if sk <= 0.0 {
        return Ok(BoundTransfer::Skipped("sigma_k is zero".into()));
    }
    let ak2: f64 = svd.sigma[..k].iter().map(|s| s * s).sum();
    let api = a * pi;
    let premise_slack = api.norm_squared() + eps * sk * sk - ak2;
    if premise_slack < -1e-9 * ak2 {
        return Ok(BoundTransfer::Skipped(format!("premise fails by {:e}", -premise_slack)));
    }
    let fit = nearest_a_sigma_eta(a, sk, eta, &api)?;
    Ok(BoundTransfer::Checked {
        lhs: fit.distance * fit.distance,
        rhs: BOUND_TRANSFER_CONSTANT * eps * sk * sk / eta,
        premise_slack,
    })
}

/// `D_x` for row `i` of a dense matrix.
pub fn exact_row_distribution(d: &DMatrix<f64>, i: usize) -> Result<Vec<f64>> {
    if i >= d.nrows() {
        return Err(OracleError::DimensionMismatch(format!("row {i} of {}", d.nrows())));
    }
    let norm2 = d.row(i).norm_squared();
    if norm2 <= 0.0 {
        return Err(OracleError::UndefinedDistribution("zero row"));
    }
    Ok(d.row(i).iter().map(|x| x * x / norm2).collect())
}

/// `C(V, w) = sum_j ||w_j V_j||^2 / ||V w||^2`.
pub fn exact_c(v: &DMatrix<f64>, w: &[f64]) -> Result<f64> {
    if v.ncols() != w.len() {
        return Err(OracleError::DimensionMismatch(format!("{} columns, {} weights", v.ncols(), w.len())));
    }
    let wv = DVector::from_column_slice(w);
    let combo = (v * &wv).norm_squared();
    if combo <= 0.0 {
        return Err(OracleError::UndefinedDistribution("Vw is the zero vector"));
    }
    let mass: f64 = v.column_iter().zip(w).map(|(c, x)| x * x * c.norm_squared()).sum();
    Ok(mass / combo)
}

/// One of the four conclusions: `lhs <= rhs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
}

impl Inequality {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-12
    }
}

/// Checks a candidate `a` (the squared norms `||a_i||^2`) against the
/// system `a_i in [0, 1]`, `sum a_i = k`,
/// `sum_{i<=k} sigma_i^2 <= sum_i sigma_i^2 a_i + eps sigma_k^2`, and if it is
/// feasible returns the four conclusions:
///
/// 1. `sum_{sigma_i >= sigma_k(1+eta)} sigma_i^2 (1 - a_i) <= eps (1 + 1/eta) sigma_k^2`
/// 2. `sum_{sigma_i < sigma_k(1-eta)} sigma_i^2 a_i <= eps (1/eta - 1) sigma_k^2`
/// 3. `sum_{sigma_i >= sigma_k(1+eta)} (1 - a_i) <= eps / eta`
/// 4. `sum_{sigma_i < sigma_k(1-eta)} a_i <= eps / eta`
///
/// `sigma` must be nonincreasing.
pub fn check_system_solution(sigma: &[f64], a: &[f64], k: usize, eps: f64, eta: f64) -> Result<[Inequality; 4]> {
    if sigma.len() != a.len() {
        return Err(OracleError::DimensionMismatch(format!("{} values, {} weights", sigma.len(), a.len())));
    }
    if k == 0 || k > sigma.len() || !(eta > 0.0 && eta <= 1.0) || eps < 0.0 {
        return Err(OracleError::InvalidParameter(format!("k={k}, eps={eps}, eta={eta}")));
    }
    if sigma.windows(2).any(|w| w[1] > w[0]) {
        return Err(OracleError::InvalidParameter("singular values must be nonincreasing".into()));
    }
    let tol = 1e-9;
    if a.iter().any(|&x| !(-tol..=1.0 + tol).contains(&x)) {
        return Err(OracleError::InvalidParameter("weights must lie in [0, 1]".into()));
    }
    let sum: f64 = a.iter().sum();
    if (sum - k as f64).abs() > tol * k as f64 {
        return Err(OracleError::InvalidParameter(format!("weights sum to {sum}, not {k}")));
    }
    let sk2 = sigma[k - 1] * sigma[k - 1];
    let top: f64 = sigma[..k].iter().map(|s| s * s).sum();
    let captured: f64 = sigma.iter().zip(a).map(|(s, x)| s * s * x).sum();
    if top > captured + eps * sk2 + tol * top {
        return Err(OracleError::InvalidParameter("weights violate the energy premise".into()));
    }
    let hi = ell(sigma, sigma[k - 1] * (1.0 + eta));
    let lo = ell(sigma, sigma[k - 1] * (1.0 - eta));
    let h2: f64 = (0..hi).map(|i| sigma[i] * sigma[i] * (1.0 - a[i])).sum();
    let l2: f64 = (lo..sigma.len()).map(|i| sigma[i] * sigma[i] * a[i]).sum();
    let h: f64 = (0..hi).map(|i| 1.0 - a[i]).sum();
    let l: f64 = (lo..sigma.len()).map(|i| a[i]).sum();
    Ok([
        Inequality { lhs: h2, rhs: eps * (1.0 + 1.0 / eta) * sk2 },
        Inequality { lhs: l2, rhs: eps * (1.0 / eta - 1.0) * sk2 },
        Inequality { lhs: h, rhs: eps / eta },
        Inequality { lhs: l, rhs: eps / eta },
    ])
}
