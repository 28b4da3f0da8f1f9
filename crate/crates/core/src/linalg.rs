//! Linear algebra driven by `l2`-norm samples: inner-product estimation,
//! sampling from a linear combination of vectors, and total variation distance.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::store::SampleVector;

/// Query access to a vector. `query` panics on an out-of-range index.
pub trait QueryAccess {
    fn len(&self) -> usize;
    fn query(&self, i: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Query access plus `l2` sampling and a known squared norm.
pub trait SampleAccess: QueryAccess {
    fn norm2(&self) -> f64;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize>;
}

impl QueryAccess for SampleVector {
    fn len(&self) -> usize {
        SampleVector::len(self)
    }

    fn query(&self, i: usize) -> f64 {
        self.get(i).expect("index in range")
    }
}

impl SampleAccess for SampleVector {
    fn norm2(&self) -> f64 {
        SampleVector::norm2(self)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        SampleVector::sample(self, rng)
    }
}

impl QueryAccess for [f64] {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }

    fn query(&self, i: usize) -> f64 {
        self[i]
    }
}

impl QueryAccess for Vec<f64> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn query(&self, i: usize) -> f64 {
        self[i]
    }
}

impl<T: QueryAccess + ?Sized> QueryAccess for &T {
    fn len(&self) -> usize {
        (**self).len()
    }

    fn query(&self, i: usize) -> f64 {
        (**self).query(i)
    }
}

impl<T: SampleAccess + ?Sized> SampleAccess for &T {
    fn norm2(&self) -> f64 {
        (**self).norm2()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        (**self).sample(rng)
    }
}

/// Median-of-means schedule: the median of `groups` means, each over
/// `group_size` draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MedianOfMeans {
    pub groups: usize,
    pub group_size: usize,
}

impl MedianOfMeans {
    /// `6 * ceil(ln(1/delta))` groups of `ceil(9 / (2 eps^2))` draws, which
    /// puts the estimate within `eps * sd` of the mean with probability at
    /// least `1 - delta`.
    pub fn for_accuracy(eps: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter { name: "eps", reason: format!("must be positive, got {eps}") });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter { name: "delta", reason: format!("must lie in (0, 1), got {delta}") });
        }
        let groups = 6 * ((1.0 / delta).ln().ceil() as usize).max(1);
        let group_size = (9.0 / (2.0 * eps * eps)).ceil() as usize;
        Ok(Self { groups, group_size })
    }

    pub fn draws(&self) -> usize {
        self.groups * self.group_size
    }
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    values.sort_by(|a, b| a.total_cmp(b));
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Estimates `<x, y>` to additive error `eps * ||x|| * ||y||` with probability
/// at least `1 - delta`, using only samples from `x` and queries to `x` and `y`.
pub fn estimate_inner<X, Y, R>(x: &X, y: &Y, eps: f64, delta: f64, rng: &mut R) -> Result<f64>
where
    X: SampleAccess + ?Sized,
    Y: QueryAccess + ?Sized,
    R: Rng + ?Sized,
{
    estimate_inner_with(x, y, MedianOfMeans::for_accuracy(eps, delta)?, rng)
}

/// [`estimate_inner`] with an explicit median-of-means schedule.
pub fn estimate_inner_with<X, Y, R>(x: &X, y: &Y, schedule: MedianOfMeans, rng: &mut R) -> Result<f64>
where
    X: SampleAccess + ?Sized,
    Y: QueryAccess + ?Sized,
    R: Rng + ?Sized,
{
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("x has length {}, y has {}", x.len(), y.len())));
    }
    let nx2 = x.norm2();
    if nx2 <= 0.0 {
        return Err(Error::InvalidParameter { name: "x", reason: "estimator needs ||x|| > 0".into() });
    }
    let mut means = Vec::with_capacity(schedule.groups);
    for _ in 0..schedule.groups {
        let mut sum = 0.0;
        for _ in 0..schedule.group_size {
            let i = x.sample(rng)?;
            let xi = x.query(i);
            if xi == 0.0 {
                return Err(Error::Internal("sampled a zero coordinate of x"));
            }
            sum += y.query(i) / xi;
        }
        means.push(sum * nx2 / schedule.group_size as f64);
    }
    Ok(median(&mut means))
}

/// Estimates `<x, y_t>` for every `t` from one shared stream of samples of `x`.
///
/// Each estimate individually carries the guarantee of [`estimate_inner_with`];
/// queries to a coordinate already seen in this call are reused.
pub fn estimate_inner_many<X, Y, R>(x: &X, ys: &[Y], schedule: MedianOfMeans, rng: &mut R) -> Result<Vec<f64>>
where
    X: SampleAccess + ?Sized,
    Y: QueryAccess,
    R: Rng + ?Sized,
{
    if let Some(bad) = ys.iter().find(|y| y.len() != x.len()) {
        return Err(Error::DimensionMismatch(format!("x has length {}, y has {}", x.len(), bad.len())));
    }
    let nx2 = x.norm2();
    if nx2 <= 0.0 {
        return Err(Error::InvalidParameter { name: "x", reason: "estimator needs ||x|| > 0".into() });
    }
    let t = ys.len();
    // ratios[i][t] = y_t(i) / x(i)
    let mut ratios: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut means = vec![Vec::with_capacity(schedule.groups); t];
    let mut sums = vec![0.0; t];
    for _ in 0..schedule.groups {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for _ in 0..schedule.group_size {
            let i = x.sample(rng)?;
            let row = match ratios.get(&i) {
                Some(r) => r,
                None => {
                    let xi = x.query(i);
                    if xi == 0.0 {
                        return Err(Error::Internal("sampled a zero coordinate of x"));
                    }
                    let r: Vec<f64> = ys.iter().map(|y| y.query(i) / xi).collect();
                    ratios.entry(i).or_insert(r)
                }
            };
            for (s, r) in sums.iter_mut().zip(row) {
                *s += r;
            }
        }
        for (m, s) in means.iter_mut().zip(&sums) {
            m.push(s * nx2 / schedule.group_size as f64);
        }
    }
    Ok(means.iter_mut().map(|m| median(m)).collect())
}

/// One accepted draw from a linear combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RejectionDraw {
    pub index: usize,
    pub iterations: usize,
}

/// Rejection sampler for `D_{Vw}` given sample access to the columns of `V`.
///
/// The proposal picks column `j` with probability proportional to
/// `||w_j V_j||^2`, then an index `i ~ D_{V_j}`, and accepts with
/// `(Vw)_i^2 / (k * sum_j (V_ij w_j)^2)`, which is at most one by
/// Cauchy-Schwarz. Columns with zero weight or zero norm never enter the
/// proposal and `k` counts only the remaining ones, so the expected number of
/// iterations is `k * C(V, w)`.
pub struct Combination<'a, C> {
    columns: &'a [C],
    weights: Vec<f64>,
    active: Vec<usize>,
    cumulative: Vec<f64>,
    len: usize,
}

impl<'a, C: SampleAccess> Combination<'a, C> {
    pub fn new(columns: &'a [C], weights: &[f64]) -> Result<Self> {
        if columns.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!("{} columns but {} weights", columns.len(), weights.len())));
        }
        let len = columns.first().map(|c| c.len()).unwrap_or(0);
        if columns.iter().any(|c| c.len() != len) {
            return Err(Error::DimensionMismatch("columns have different lengths".into()));
        }
        let mut active = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for (j, (c, &w)) in columns.iter().zip(weights).enumerate() {
            let mass = w * w * c.norm2();
            if mass > 0.0 {
                total += mass;
                active.push(j);
                cumulative.push(total);
            }
        }
        if active.is_empty() {
            return Err(Error::UndefinedDistribution("every weighted column is zero"));
        }
        Ok(Self { columns, weights: weights.to_vec(), active, cumulative, len })
    }

    /// Number of columns taking part in the proposal.
    pub fn active_columns(&self) -> usize {
        self.active.len()
    }

    /// `sum_j ||w_j V_j||^2`, the proposal mass.
    pub fn proposal_mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(Vw)_i` and `sum_j (V_ij w_j)^2`, using one query per active column.
    pub fn entry(&self, i: usize) -> (f64, f64) {
        let mut s = 0.0;
        let mut ss = 0.0;
        for &j in &self.active {
            let t = self.columns[j].query(i) * self.weights[j];
            s += t;
            ss += t * t;
        }
        (s, ss)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_iters: usize) -> Result<RejectionDraw> {
        let k = self.active.len() as f64;
        let total = self.proposal_mass();
        for iteration in 1..=max_iters {
            let u = rng.random::<f64>() * total;
            let slot = self.cumulative.partition_point(|&c| c <= u).min(self.active.len() - 1);
            let i = self.columns[self.active[slot]].sample(rng)?;
            if i >= self.len {
                return Err(Error::Internal("column sampler returned an out-of-range index"));
            }
            let (s, ss) = self.entry(i);
            if ss <= 0.0 {
                continue;
            }
            let r = s * s / (k * ss);
            debug_assert!(r <= 1.0 + 1e-9, "acceptance ratio {r} exceeds one");
            if rng.random::<f64>() < r {
                return Ok(RejectionDraw { index: i, iterations: iteration });
            }
        }
        Err(Error::CancellationTooHigh { budget: max_iters })
    }
}

/// Draws `s ~ D_{Vw}` where `V`'s columns are `columns`. Fails with
/// [`Error::CancellationTooHigh`] once `max_iters` proposals are rejected.
pub fn rejection_sample_combination<C, R>(
    columns: &[C],
    weights: &[f64],
    rng: &mut R,
    max_iters: usize,
) -> Result<RejectionDraw>
where
    C: SampleAccess,
    R: Rng + ?Sized,
{
    Combination::new(columns, weights)?.sample(rng, max_iters)
}

/// Default iteration budget: `64 * k * cancellation_guess`.
pub fn default_rejection_budget(k: usize, cancellation_guess: f64) -> usize {
    (64.0 * k as f64 * cancellation_guess.max(1.0)).ceil() as usize
}

/// `D_x(i) = x_i^2 / ||x||^2`.
pub fn l2_distribution(x: &[f64]) -> Result<Vec<f64>> {
    let n2: f64 = x.iter().map(|v| v * v).sum();
    if n2 <= 0.0 {
        return Err(Error::UndefinedDistribution("the zero vector has no l2 distribution"));
    }
    Ok(x.iter().map(|v| v * v / n2).collect())
}

/// Normalizes a histogram into a density.
pub fn empirical_distribution(counts: &[u64]) -> Result<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::UndefinedDistribution("no samples"));
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// `1/2 * sum |P(x) - Q(x)|` for two densities over the same finite support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!("supports of size {} and {}", p.len(), q.len())));
    }
    for (name, d) in [("p", p), ("q", q)] {
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > 1e-9 || d.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter { name, reason: format!("not a density (sums to {s})") });
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
