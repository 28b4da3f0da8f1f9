//! Threshold-based FKV sketching.
//!
//! [`modfkv`] samples `q` rows of `A` by their squared norms and `q` columns
//! from the mixture of the sampled rows' `l2` distributions, forms the
//! `q x q` row-and-column normalized core `W`, and keeps the left singular
//! vectors of `W` whose singular values exceed `sigma`.
//!
//! The output is a [`LowRankDescription`]: the sampled row indices, their
//! renormalization scales, `U_hat` (`q x k`) and `Sigma_hat` (`k`). With `S`
//! the `q x n` matrix of rescaled sampled rows, it implicitly defines
//! `V_hat = S^T U_hat Sigma_hat^{-1}` and the low-rank approximation
//! `D = A V_hat V_hat^T`. Nothing of size `m` or `n` is materialized.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::store::{RowView, SampleMatrix};

/// Default upper bound on the sketch size `q`.
pub const DEFAULT_Q_CAP: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct ModFkvParams {
    /// Singular value threshold, in `(0, ||A||_F]`.
    pub sigma: f64,
    /// Accuracy parameter.
    pub eps: f64,
    /// Slack in the threshold, in `[eps^2, 1]`.
    pub eta: f64,
    /// Fixed sketch size. Without it `q = ceil(q_constant * K^4 / eps_bar^2)`.
    pub q_override: Option<usize>,
    pub q_constant: f64,
    pub cap: usize,
    pub seed: u64,
}

impl ModFkvParams {
    pub fn new(sigma: f64, eps: f64, eta: f64) -> Self {
        Self { sigma, eps, eta, q_override: None, q_constant: 1.0, cap: DEFAULT_Q_CAP, seed: 0 }
    }

    pub fn with_q(mut self, q: usize) -> Self {
        self.q_override = Some(q);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    /// Validates the parameters against `||A||_F` and resolves `q`.
    pub fn plan(&self, frob: f64) -> Result<SketchPlan> {
        if !(frob > 0.0) {
            return Err(Error::UndefinedDistribution("sketching the zero matrix"));
        }
        if !(self.sigma > 0.0 && self.sigma <= frob * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("must lie in (0, ||A||_F = {frob}], got {}", self.sigma),
            });
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("must lie in (0, 1], got {}", self.eps),
            });
        }
        if !(self.eta >= self.eps * self.eps && self.eta <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!("must lie in [eps^2, 1] = [{}, 1], got {}", self.eps * self.eps, self.eta),
            });
        }
        let k_ratio = (frob / self.sigma).powi(2);
        let eps_bar = self.eta * self.eps * self.eps;
        let q = match self.q_override {
            Some(0) => return Err(Error::InvalidParameter { name: "q_override", reason: "must be positive".into() }),
            Some(q) => q as u128,
            None => {
                let q = (self.q_constant * k_ratio.powi(4) / (eps_bar * eps_bar)).ceil();
                if q >= u128::MAX as f64 {
                    u128::MAX
                } else {
                    q as u128
                }
            }
        };
        if q > self.cap as u128 {
            return Err(Error::SketchTooLarge { q, cap: self.cap });
        }
        let mut warnings = Vec::new();
        let eps_limit = (self.sigma / frob).sqrt() / 4.0;
        if self.eps > eps_limit {
            warnings.push(format!(
                "eps = {} exceeds sqrt(sigma/||A||_F)/4 = {eps_limit:.4}; the approximation guarantee does not apply",
                self.eps
            ));
        }
        Ok(SketchPlan { q: q as usize, k_ratio, eps_bar, warnings })
    }
}

/// Resolved sketch size and derived constants.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchPlan {
    pub q: usize,
    /// `K = ||A||_F^2 / sigma^2`.
    pub k_ratio: f64,
    /// `eps_bar = eta * eps^2`.
    pub eps_bar: f64,
    pub warnings: Vec<String>,
}

/// Succinct description of `D = A S^T U_hat Sigma_hat^{-2} U_hat^T S`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankDescription {
    pub rows: usize,
    pub cols: usize,
    /// Sampled rows `i_1..i_q`, with multiplicity.
    pub row_indices: Vec<usize>,
    /// Row `r` of `S` is `row_scales[r] * A_{i_r}`; every row of `S` has norm
    /// `||A||_F / sqrt(q)`.
    pub row_scales: Vec<f64>,
    /// `q x k`, orthonormal columns.
    pub uhat: DMatrix<f64>,
    /// Singular values of `W` above the threshold, nonincreasing.
    pub sigma_hat: Vec<f64>,
    pub frob_a: f64,
    pub sigma: f64,
}

impl LowRankDescription {
    pub fn q(&self) -> usize {
        self.row_indices.len()
    }

    pub fn k(&self) -> usize {
        self.sigma_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_hat.is_empty()
    }

    /// `K = ||A||_F^2 / sigma^2` at sketch time.
    pub fn k_ratio(&self) -> f64 {
        (self.frob_a / self.sigma).powi(2)
    }

    /// Views of the rows of `S` over the store they were sampled from.
    pub fn s_rows<'a>(&self, a: &'a SampleMatrix) -> Result<Vec<RowView<'a>>> {
        self.check_store(a)?;
        self.row_indices.iter().zip(&self.row_scales).map(|(&i, &s)| a.scaled_row(i, s)).collect()
    }

    pub fn check_store(&self, a: &SampleMatrix) -> Result<()> {
        if a.nrows() != self.rows || a.ncols() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "description is {}x{}, store is {}x{}",
                self.rows,
                self.cols,
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(())
    }

    /// `U_hat Sigma_hat^{-2} U_hat^T x` for a `q`-vector `x`.
    pub fn apply_core(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.q() {
            return Err(Error::DimensionMismatch(format!("expected {} entries, got {}", self.q(), x.len())));
        }
        let mut coeffs = vec![0.0; self.k()];
        for (l, c) in coeffs.iter_mut().enumerate() {
            let col = self.uhat.column(l);
            let dot: f64 = col.iter().zip(x).map(|(u, v)| u * v).sum();
            *c = dot / (self.sigma_hat[l] * self.sigma_hat[l]);
        }
        let mut out = vec![0.0; self.q()];
        for (l, c) in coeffs.iter().enumerate() {
            for (o, u) in out.iter_mut().zip(self.uhat.column(l).iter()) {
                *o += c * u;
            }
        }
        Ok(out)
    }

    const MAGIC: &'static [u8; 4] = b"MFKV";
    const VERSION: u32 = 1;

    /// Writes the versioned binary form: magic `MFKV`, version (`u32`), then
    /// `q, k, m, n` as `u64`, row indices (`u64`), row scales, `U_hat`
    /// row-major, `Sigma_hat`, `||A||_F` and `sigma` (all `f64`), little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        for v in [self.q(), self.k(), self.rows, self.cols] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for &i in &self.row_indices {
            w.write_all(&(i as u64).to_le_bytes())?;
        }
        for &s in &self.row_scales {
            w.write_all(&s.to_le_bytes())?;
        }
        for r in 0..self.q() {
            for c in 0..self.k() {
                w.write_all(&self.uhat[(r, c)].to_le_bytes())?;
            }
        }
        for &s in &self.sigma_hat {
            w.write_all(&s.to_le_bytes())?;
        }
        w.write_all(&self.frob_a.to_le_bytes())?;
        w.write_all(&self.sigma.to_le_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != Self::MAGIC {
            return Err(Error::Format("missing MFKV header".into()));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported description version {version}")));
        }
        let q = cur.u64()? as usize;
        let k = cur.u64()? as usize;
        let rows = cur.u64()? as usize;
        let cols = cur.u64()? as usize;
        let expected = 4 + 4 + 32 + 8 * (2 * q + q * k + k + 2);
        if bytes.len() != expected {
            return Err(Error::Format(format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let row_indices = (0..q).map(|_| cur.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        if row_indices.iter().any(|&i| i >= rows) {
            return Err(Error::Format("row index out of range".into()));
        }
        let row_scales = (0..q).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let mut uhat = DMatrix::zeros(q, k);
        for r in 0..q {
            for c in 0..k {
                uhat[(r, c)] = cur.f64()?;
            }
        }
        let sigma_hat = (0..k).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let frob_a = cur.f64()?;
        let sigma = cur.f64()?;
        Ok(Self { rows, cols, row_indices, row_scales, uhat, sigma_hat, frob_a, sigma })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("unexpected end of description".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Runs the sketch. Queries exactly `q^2` entries of `a`.
///
/// An empty description (`k = 0`, so `D = 0`) is a valid result when no
/// singular value of `W` exceeds `sigma`.
pub fn modfkv(a: &SampleMatrix, params: &ModFkvParams) -> Result<LowRankDescription> {
    let frob2 = a.frob2();
    let frob = frob2.sqrt();
    let plan = params.plan(frob)?;
    let q = plan.q;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let row_indices = (0..q).map(|_| a.sample_row(&mut rng)).collect::<Result<Vec<_>>>()?;
    let row_norm2 = row_indices.iter().map(|&i| a.row_norm(i).map(|n| n * n)).collect::<Result<Vec<_>>>()?;

    // Column j_c: a uniformly chosen sampled row, then D over that row.
    let col_indices = (0..q)
        .map(|_| {
            let s = rng.random_range(0..q);
            a.sample_in_row(row_indices[s], &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    // Repeated draws give identical rows (columns) of W, so W = P M Q^T with
    // P, Q orthonormal and M indexed by distinct draws, scaled by the square
    // root of each multiplicity. The SVD of M gives that of W.
    let (rows, row_of, row_mult) = distinct(&row_indices);
    let (cols, col_of, col_mult) = distinct(&col_indices);
    let mut core = DMatrix::zeros(rows.len(), cols.len());
    for (r, &i) in row_indices.iter().enumerate() {
        for (c, &j) in col_indices.iter().enumerate() {
            core[(row_of[r], col_of[c])] = a.get(i, j)?;
        }
    }
    let distinct_norm2: Vec<f64> = rows.iter().map(|&i| a.row_norm(i).map(|n| n * n)).collect::<Result<_>>()?;

    // F(j) = (1/q) sum_s A_{i_s j}^2 / ||A_{i_s}||^2 over the sampled rows.
    let col_prob: Vec<f64> = (0..cols.len())
        .map(|b| {
            (0..rows.len()).map(|r| row_mult[r] * core[(r, b)] * core[(r, b)] / distinct_norm2[r]).sum::<f64>()
                / q as f64
        })
        .collect();
    let distinct_row_prob: Vec<f64> = distinct_norm2.iter().map(|n2| n2 / frob2).collect();
    for r in 0..rows.len() {
        for b in 0..cols.len() {
            core[(r, b)] *=
                (row_mult[r] * col_mult[b]).sqrt() / (q as f64 * (distinct_row_prob[r] * col_prob[b]).sqrt());
        }
    }
    let row_prob: Vec<f64> = row_norm2.iter().map(|n2| n2 / frob2).collect();

    let svd = core
        .try_svd(true, false, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or(Error::Internal("SVD of the sampled core did not converge"))?;
    let small_u = svd.u.ok_or(Error::Internal("SVD did not return U"))?;
    let mut u = DMatrix::zeros(q, small_u.ncols());
    for (r, &d) in row_of.iter().enumerate() {
        let scale = row_mult[d].sqrt();
        for l in 0..small_u.ncols() {
            u[(r, l)] = small_u[(d, l)] / scale;
        }
    }
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let keep: Vec<usize> = order.into_iter().filter(|&l| svd.singular_values[l] > params.sigma).collect();

    let mut uhat = DMatrix::zeros(q, keep.len());
    let mut sigma_hat = Vec::with_capacity(keep.len());
    for (c, &l) in keep.iter().enumerate() {
        let mut col = u.column(l).clone_owned();
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-10) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        uhat.set_column(c, &col);
        sigma_hat.push(svd.singular_values[l]);
    }

    let row_scales = row_prob.iter().map(|p| 1.0 / (q as f64 * p).sqrt()).collect();
    Ok(LowRankDescription {
        rows: a.nrows(),
        cols: a.ncols(),
        row_indices,
        row_scales,
        uhat,
        sigma_hat,
        frob_a: frob,
        sigma: params.sigma,
    })
}

const SVD_MAX_ITERATIONS: usize = 100_000;

/// Distinct values in first-seen order, the position of each input among
/// them, and their multiplicities.
fn distinct(values: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut seen = std::collections::HashMap::new();
    let (mut keys, mut mult) = (Vec::new(), Vec::new());
    let slots = values
        .iter()
        .map(|&v| {
            *seen.entry(v).or_insert_with(|| {
                keys.push(v);
                mult.push(0.0);
                keys.len() - 1
            })
        })
        .collect::<Vec<_>>();
    for &s in &slots {
        mult[s] += 1.0;
    }
    (keys, slots, mult)
}

/// Largest dense problem [`densify_description`] will build.
pub const DENSIFY_LIMIT: usize = 1 << 22;

fn dense_s(desc: &LowRankDescription, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != desc.rows || a.ncols() != desc.cols {
        return Err(Error::DimensionMismatch(format!(
            "description is {}x{}, matrix is {}x{}",
            desc.rows,
            desc.cols,
            a.nrows(),
            a.ncols()
        )));
    }
    if desc.rows * desc.cols > DENSIFY_LIMIT {
        return Err(Error::InvalidParameter {
            name: "a",
            reason: format!("{}x{} is too large to densify", desc.rows, desc.cols),
        });
    }
    let mut s = DMatrix::zeros(desc.q(), desc.cols);
    for (r, (&i, &scale)) in desc.row_indices.iter().zip(&desc.row_scales).enumerate() {
        s.set_row(r, &(a.row(i) * scale));
    }
    Ok(s)
}

/// Dense `S` (`q x n`) for small instances.
pub fn densify_sketch_rows(desc: &LowRankDescription, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    dense_s(desc, a)
}

/// Dense `V_hat = S^T U_hat Sigma_hat^{-1}` (`n x k`) for small instances.
pub fn densify_right_vectors(desc: &LowRankDescription, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = dense_s(desc, a)?;
    let mut v = s.transpose() * &desc.uhat;
    for (l, sv) in desc.sigma_hat.iter().enumerate() {
        v.column_mut(l).scale_mut(1.0 / sv);
    }
    Ok(v)
}

/// Dense `D = A V_hat V_hat^T` for small instances.
pub fn densify_description(desc: &LowRankDescription, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if desc.is_empty() {
        dense_s(desc, a)?;
        return Ok(DMatrix::zeros(desc.rows, desc.cols));
    }
    let v = densify_right_vectors(desc, a)?;
    Ok(a * &v * v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_one(m: usize, n: usize) -> DMatrix<f64> {
        let u: Vec<f64> = (0..m).map(|i| 1.0 + (i % 3) as f64).collect();
        let v: Vec<f64> = (0..n).map(|j| ((j as f64) * 0.7).cos()).collect();
        let a = DMatrix::from_fn(m, n, |i, j| u[i] * v[j]);
        let f = a.norm();
        a / f
    }

    #[test]
    fn rank_one_recovers_one_direction() {
        let a = rank_one(12, 9);
        let store = SampleMatrix::from_dense(&a).unwrap();
        let desc = modfkv(&store, &ModFkvParams::new(0.5, 0.15, 1.0).with_q(64).with_seed(3)).unwrap();
        assert_eq!(desc.k(), 1);
        let d = densify_description(&desc, &a).unwrap();
        assert!((&a - &d).norm() < 0.1, "||A - D|| = {}", (&a - &d).norm());
        let utu = desc.uhat.transpose() * &desc.uhat;
        assert!((utu - DMatrix::identity(1, 1)).norm() < 1e-8);
        assert!(desc.sigma_hat[0] > 0.5);
    }

    #[test]
    fn identity_keeps_everything() {
        let a = DMatrix::identity(4, 4);
        let store = SampleMatrix::from_dense(&a).unwrap();
        // ||I||_F = 2, so sigma = 0.5 is well below every singular value.
        let desc = modfkv(&store, &ModFkvParams::new(0.5, 0.1, 1.0).with_q(1024).with_seed(1)).unwrap();
        assert_eq!(desc.k(), 4);
        let d = densify_description(&desc, &a).unwrap();
        // D is diag(row draws / column draws) per coordinate: diagonal, near I.
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(d[(i, j)].abs() < 1e-9);
                }
            }
        }
        assert!((d - a).norm() < 0.3);
    }

    #[test]
    fn exact_query_count() {
        let a = rank_one(10, 10);
        let store = SampleMatrix::from_dense(&a).unwrap();
        store.reset_counters();
        modfkv(&store, &ModFkvParams::new(0.5, 0.1, 1.0).with_q(37)).unwrap();
        assert_eq!(store.entry_queries(), 37 * 37);
    }

    #[test]
    fn everything_below_threshold() {
        // Flat spectrum: all singular values 1/sqrt(8) ~ 0.354 < 0.9.
        let a = DMatrix::identity(8, 8) / 8f64.sqrt();
        let store = SampleMatrix::from_dense(&a).unwrap();
        let desc = modfkv(&store, &ModFkvParams::new(0.9, 0.2, 1.0).with_q(200)).unwrap();
        assert!(desc.is_empty());
        assert_eq!(densify_description(&desc, &a).unwrap(), DMatrix::zeros(8, 8));
    }

    #[test]
    fn parameter_validation() {
        let a = rank_one(4, 4);
        let store = SampleMatrix::from_dense(&a).unwrap();
        assert!(matches!(
            modfkv(&store, &ModFkvParams::new(2.0, 0.1, 1.0)),
            Err(Error::InvalidParameter { name: "sigma", .. })
        ));
        assert!(matches!(
            modfkv(&store, &ModFkvParams::new(0.5, 0.1, 0.001)),
            Err(Error::InvalidParameter { name: "eta", .. })
        ));
        assert!(matches!(modfkv(&store, &ModFkvParams::new(0.5, 0.1, 1.0)), Err(Error::SketchTooLarge { .. })));
        assert!(matches!(
            modfkv(&store, &ModFkvParams::new(0.5, 0.1, 1.0).with_q(5000)),
            Err(Error::SketchTooLarge { q: 5000, cap: DEFAULT_Q_CAP })
        ));
        assert!(modfkv(&SampleMatrix::new(3, 3).unwrap(), &ModFkvParams::new(0.5, 0.1, 1.0).with_q(3)).is_err());
        let plan = ModFkvParams::new(0.5, 0.5, 1.0).with_q(3).plan(1.0).unwrap();
        assert_eq!(plan.warnings.len(), 1);
        assert_eq!(plan.k_ratio, 4.0);
    }

    #[test]
    fn same_seed_same_description() {
        let a = rank_one(20, 15);
        let store = SampleMatrix::from_dense(&a).unwrap();
        let p = ModFkvParams::new(0.4, 0.1, 1.0).with_q(50).with_seed(99);
        assert_eq!(modfkv(&store, &p).unwrap(), modfkv(&store, &p).unwrap());
    }

    #[test]
    fn binary_form() {
        let a = rank_one(6, 5);
        let store = SampleMatrix::from_dense(&a).unwrap();
        let desc = modfkv(&store, &ModFkvParams::new(0.5, 0.1, 1.0).with_q(8)).unwrap();
        let mut buf = Vec::new();
        desc.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MFKV");
        assert_eq!(buf.len(), 8 + 32 + 8 * (16 + 8 * desc.k() + desc.k() + 2));
        assert_eq!(LowRankDescription::read_from(buf.as_slice()).unwrap(), desc);
        assert!(LowRankDescription::read_from(&buf[..buf.len() - 1]).is_err());
    }
}
