//! Sampling from rows of the low-rank approximation `D = A V_hat V_hat^T`.
//!
//! For a row `i` the sampler estimates `A_i S^T` entrywise with the
//! inner-product estimator, maps it through `U_hat Sigma_hat^{-2} U_hat^T` to
//! weights `w`, and rejection-samples from `S^T w`, whose direction is that of
//! `D_i`. Nothing it touches scales with `m` or `n`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    default_rejection_budget, estimate_inner_many, Combination, MedianOfMeans, RejectionDraw, SampleAccess,
};
use crate::modfkv::LowRankDescription;
use crate::store::{RowView, SampleMatrix};

/// Estimate of `A_i S^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct RowEstimate {
    pub est: Vec<f64>,
    /// Relative accuracy each entry was estimated to.
    pub eps_used: f64,
    pub true_row_norm: f64,
    /// `eps_used * ||A_i|| * ||A||_F`, the `l2` error bound on `est` that holds
    /// with the estimator's success probability.
    pub error_bound: f64,
    /// Estimation rounds spent (always 1 outside [`refine_row_estimate`]).
    pub rounds: usize,
}

impl RowEstimate {
    pub fn norm(&self) -> f64 {
        self.est.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub eps: f64,
    /// Failure probability of the estimation step. Defaults to `eps`.
    pub delta: Option<f64>,
    /// Rejection budget. Defaults to `64 * q * K`.
    pub budget: Option<usize>,
    /// On a failed rejection run, return a draw from `D_{A_i}` instead of an
    /// error.
    pub fallback: bool,
}

impl SamplerConfig {
    pub fn new(eps: f64) -> Self {
        Self { eps, delta: None, budget: None, fallback: true }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn strict(mut self) -> Self {
        self.fallback = false;
        self
    }

    fn delta(&self) -> f64 {
        self.delta.unwrap_or(self.eps)
    }
}

/// One recommendation with its instrumentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Recommendation {
    pub index: usize,
    /// Rejection iterations, including the failed ones of a fallback.
    pub iterations: usize,
    pub fallback: bool,
}

/// Per-row state reused across recommendations for the same user.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedRow {
    pub estimate: RowEstimate,
    /// `U_hat Sigma_hat^{-2} U_hat^T est`: the coefficients of the rows of `S`.
    pub weights: Vec<f64>,
}

/// Samples rows of `D` for one description over the store it was built from.
///
/// Estimates of `A_i S^T` are cached per row, so repeated recommendations for
/// a user cost only rejection sampling. The cache takes concurrent readers and
/// one writer per key.
pub struct RowSampler<'a> {
    desc: &'a LowRankDescription,
    store: &'a SampleMatrix,
    s_rows: Vec<RowView<'a>>,
    config: SamplerConfig,
    cache: RwLock<HashMap<usize, Arc<PreparedRow>>>,
}

impl<'a> RowSampler<'a> {
    pub fn new(desc: &'a LowRankDescription, store: &'a SampleMatrix, config: SamplerConfig) -> Result<Self> {
        if desc.is_empty() {
            return Err(Error::NoSignal);
        }
        if !(config.eps > 0.0 && config.eps <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("must lie in (0, 1], got {}", config.eps),
            });
        }
        let s_rows = desc.s_rows(store)?;
        Ok(Self { desc, store, s_rows, config, cache: RwLock::new(HashMap::new()) })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn description(&self) -> &LowRankDescription {
        self.desc
    }

    pub fn budget(&self) -> usize {
        self.config.budget.unwrap_or_else(|| default_rejection_budget(self.desc.q(), self.desc.k_ratio()))
    }

    /// Returns the cached state for row `i`, estimating it on first use.
    pub fn prepare<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<Arc<PreparedRow>> {
        if let Some(p) = self.cache.read().expect("sampler cache poisoned").get(&i) {
            return Ok(Arc::clone(p));
        }
        let estimate = estimate_row(self.desc, self.store, &self.s_rows, i, self.config.eps, self.config.delta(), rng)?;
        self.insert_estimate(i, estimate)
    }

    /// Installs an externally computed estimate (for instance a refined one)
    /// for row `i`, replacing any cached state.
    pub fn insert_estimate(&self, i: usize, estimate: RowEstimate) -> Result<Arc<PreparedRow>> {
        let weights = self.desc.apply_core(&estimate.est)?;
        let prepared = Arc::new(PreparedRow { estimate, weights });
        self.cache.write().expect("sampler cache poisoned").insert(i, Arc::clone(&prepared));
        Ok(prepared)
    }

    pub fn cached_rows(&self) -> usize {
        self.cache.read().expect("sampler cache poisoned").len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<Recommendation> {
        let prepared = self.prepare(i, rng)?;
        let combination = match Combination::new(&self.s_rows, &prepared.weights) {
            Ok(c) => c,
            Err(Error::UndefinedDistribution(_)) => return Err(Error::OrthogonalToSketch),
            Err(e) => return Err(e),
        };
        let budget = self.budget();
        match combination.sample(rng, budget) {
            Ok(RejectionDraw { index, iterations }) => Ok(Recommendation { index, iterations, fallback: false }),
            Err(Error::CancellationTooHigh { .. }) if self.config.fallback => {
                let index = self.store.sample_in_row(i, rng)?;
                Ok(Recommendation { index, iterations: budget, fallback: true })
            }
            Err(e) => Err(e),
        }
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, i: usize, count: usize, rng: &mut R) -> Result<Vec<Recommendation>> {
        (0..count).map(|_| self.sample(i, rng)).collect()
    }
}

fn estimate_row<R: Rng + ?Sized>(
    desc: &LowRankDescription,
    store: &SampleMatrix,
    s_rows: &[RowView<'_>],
    i: usize,
    eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<RowEstimate> {
    let row = store.row(i)?;
    let norm = row.norm2().sqrt();
    if norm == 0.0 {
        return Err(Error::UndefinedDistribution("row has no entries"));
    }
    let eps_used = eps / desc.k_ratio().sqrt();
    // Shared draws: a union bound over the q estimates.
    let schedule = MedianOfMeans::for_accuracy(eps_used, (delta / desc.q() as f64).min(0.5))?;
    let est = estimate_inner_many(&row, s_rows, schedule, rng)?;
    Ok(RowEstimate { est, eps_used, true_row_norm: norm, error_bound: eps_used * norm * desc.frob_a, rounds: 1 })
}

/// Draws one column index from (approximately) `D_{D_i}`.
///
/// Uses failure probability `delta` for the estimates and, as the fallback
/// on a failed rejection run, a draw from `D_{A_i}`.
pub fn sample_recommendation<R: Rng + ?Sized>(
    desc: &LowRankDescription,
    a: &SampleMatrix,
    i: usize,
    eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<usize> {
    let sampler = RowSampler::new(desc, a, SamplerConfig::new(eps).with_delta(delta))?;
    Ok(sampler.sample(i, rng)?.index)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineConfig {
    pub eps0: f64,
    pub max_rounds: usize,
    pub delta: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { eps0: 0.5, max_rounds: 6, delta: 0.01 }
    }
}

/// Re-estimates `A_i S^T` with `eps_j = eps0 / 2^j` until the additive error
/// bound is at most `target_rel` times the size of the estimated vector.
///
/// The stopping rule `(1 + t) B_j <= t ||est_j||` gives
/// `||est - A_i S^T|| <= t ||A_i S^T||` whenever the estimates succeed.
pub fn refine_row_estimate<R: Rng + ?Sized>(
    desc: &LowRankDescription,
    a: &SampleMatrix,
    i: usize,
    target_rel: f64,
    config: &RefineConfig,
    rng: &mut R,
) -> Result<RowEstimate> {
    if !(target_rel > 0.0) {
        return Err(Error::InvalidParameter {
            name: "target_rel",
            reason: format!("must be positive, got {target_rel}"),
        });
    }
    if !(config.eps0 > 0.0 && config.eps0 <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps0",
            reason: format!("must lie in (0, 1], got {}", config.eps0),
        });
    }
    let s_rows = desc.s_rows(a)?;
    let mut eps = config.eps0;
    for round in 0..config.max_rounds {
        let mut e = estimate_row(desc, a, &s_rows, i, eps, config.delta, rng)?;
        if (1.0 + target_rel) * e.error_bound <= target_rel * e.norm() {
            e.rounds = round + 1;
            return Ok(e);
        }
        eps /= 2.0;
    }
    Err(Error::OrthogonalToSketch)
}

/// Estimates `V^T x` entrywise to accuracy `eps / sqrt(k)`, sampling from `x`.
pub fn estimate_projection<C, X, R>(columns: &[C], x: &X, eps: f64, delta: f64, rng: &mut R) -> Result<Vec<f64>>
where
    C: SampleAccess,
    X: SampleAccess + ?Sized,
    R: Rng + ?Sized,
{
    let k = columns.len();
    if k == 0 {
        return Err(Error::NoSignal);
    }
    let schedule = MedianOfMeans::for_accuracy(eps / (k as f64).sqrt(), (delta / k as f64).min(0.5))?;
    estimate_inner_many(x, columns, schedule, rng)
}

/// Samples from (approximately) `D_{V V^T x}` for near-orthonormal columns `V`:
/// [`estimate_projection`], then rejection sampling from `V (V^T x)`.
pub fn project_and_sample<C, X, R>(
    columns: &[C],
    x: &X,
    eps: f64,
    delta: f64,
    budget: Option<usize>,
    rng: &mut R,
) -> Result<RejectionDraw>
where
    C: SampleAccess,
    X: SampleAccess + ?Sized,
    R: Rng + ?Sized,
{
    let coeffs = estimate_projection(columns, x, eps, delta, rng)?;
    let combination = match Combination::new(columns, &coeffs) {
        Ok(c) => c,
        Err(Error::UndefinedDistribution(_)) => return Err(Error::OrthogonalToSketch),
        Err(e) => return Err(e),
    };
    combination.sample(rng, budget.unwrap_or_else(|| default_rejection_budget(columns.len(), 1.0)))
}

/// `S^T w` as sparse `(column, value)` pairs, read without touching the query
/// counters.
fn combine_rows(desc: &LowRankDescription, a: &SampleMatrix, weights: &[f64]) -> Result<(HashMap<usize, f64>, f64)> {
    desc.check_store(a)?;
    if weights.len() != desc.q() {
        return Err(Error::DimensionMismatch(format!("expected {} weights, got {}", desc.q(), weights.len())));
    }
    let mut acc: HashMap<usize, f64> = HashMap::new();
    let mut mass = 0.0;
    for ((&i, &scale), &w) in desc.row_indices.iter().zip(&desc.row_scales).zip(weights) {
        let c = scale * w;
        let row = a.row_nonzeros(i)?;
        mass += c * c * row.iter().map(|(_, v)| v * v).sum::<f64>();
        for (j, v) in row {
            *acc.entry(j).or_insert(0.0) += c * v;
        }
    }
    Ok((acc, mass))
}

/// Exact cancellation `C(S^T, w) = sum_t ||w_t S_t||^2 / ||S^T w||^2`.
pub fn estimate_cancellation(desc: &LowRankDescription, a: &SampleMatrix, weights: &[f64]) -> Result<f64> {
    let (acc, mass) = combine_rows(desc, a, weights)?;
    let norm2: f64 = acc.values().map(|v| v * v).sum();
    if norm2 <= 0.0 {
        return Err(Error::UndefinedDistribution("S^T w is the zero vector"));
    }
    Ok(mass / norm2)
}

/// Exact `D_{S^T w}` over all `n` columns, the distribution the rejection
/// step samples from.
pub fn combination_distribution(desc: &LowRankDescription, a: &SampleMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    let (acc, _) = combine_rows(desc, a, weights)?;
    let norm2: f64 = acc.values().map(|v| v * v).sum();
    if norm2 <= 0.0 {
        return Err(Error::UndefinedDistribution("S^T w is the zero vector"));
    }
    let mut p = vec![0.0; desc.cols];
    for (j, v) in acc {
        p[j] = v * v / norm2;
    }
    Ok(p)
}

/// Exact `A_i S^T`, for checking estimates.
pub fn exact_row_projection(desc: &LowRankDescription, a: &SampleMatrix, i: usize) -> Result<Vec<f64>> {
    desc.check_store(a)?;
    let row = a.row_nonzeros(i)?;
    Ok(desc
        .row_indices
        .iter()
        .zip(&desc.row_scales)
        .map(|(&t, &scale)| {
            let other: HashMap<usize, f64> = a.row_nonzeros(t).unwrap_or_default().into_iter().collect();
            scale * row.iter().map(|(j, v)| v * other.get(j).copied().unwrap_or(0.0)).sum::<f64>()
        })
        .collect())
}
