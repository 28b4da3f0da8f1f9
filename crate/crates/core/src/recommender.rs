//! Recommendations from a subsampled preference matrix, and their evaluation.
//!
//! A preference matrix `T` (binary, or with entries in `[0, 1]`) is observed
//! only through `A = T_hat`, where each entry survives independently with
//! probability `p` and is rescaled by `1/p`. [`Pipeline`] picks the sketch
//! threshold from `(k, eps, p)`, runs the sketch on `A` and samples
//! recommendations for users. [`evaluate`] needs the hidden `T` and measures
//! what users actually received against it.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{empirical_distribution, l2_distribution, tv_distance};
use crate::modfkv::{modfkv, LowRankDescription, ModFkvParams, DEFAULT_Q_CAP};
use crate::sampler::{RowSampler, SamplerConfig};
use crate::store::SampleMatrix;

/// Draws `T_hat`: entry `(i, j)` is `T_ij / p` with probability `p`, else 0.
pub fn subsample<R: Rng + ?Sized>(t: &DMatrix<f64>, p: f64, rng: &mut R) -> Result<SampleMatrix> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter { name: "p", reason: format!("must lie in (0, 1], got {p}") });
    }
    let mut a = SampleMatrix::new(t.nrows(), t.ncols())?;
    for i in 0..t.nrows() {
        for j in 0..t.ncols() {
            // One draw per entry keeps the stream independent of T's values.
            let keep = rng.random::<f64>() < p;
            if keep && t[(i, j)] != 0.0 {
                a.set(i, j, t[(i, j)] / p)?;
            }
        }
    }
    Ok(a)
}

/// `||T - T_k||_F / ||T||_F`.
pub fn relative_tail(t: &DMatrix<f64>, k: usize) -> f64 {
    let sv = t.singular_values();
    let mut s: Vec<f64> = sv.iter().map(|x| x * x).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = s.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    (s.iter().skip(k).sum::<f64>() / total).sqrt()
}

/// A planted preference matrix and its realized subsample.
#[derive(Clone, Debug)]
pub struct PreferenceInstance {
    pub t: DMatrix<f64>,
    pub k: usize,
    pub rho: f64,
    pub p: f64,
    pub a: SampleMatrix,
}

impl PreferenceInstance {
    pub fn new<R: Rng + ?Sized>(t: DMatrix<f64>, k: usize, p: f64, rng: &mut R) -> Result<Self> {
        if t.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidParameter { name: "t", reason: "entries must lie in [0, 1]".into() });
        }
        let a = subsample(&t, p, rng)?;
        let rho = relative_tail(&t, k);
        Ok(Self { t, k, rho, p, a })
    }

    pub fn m(&self) -> usize {
        self.t.nrows()
    }

    pub fn n(&self) -> usize {
        self.t.ncols()
    }

    pub fn is_binary(&self) -> bool {
        self.t.iter().all(|&x| x == 0.0 || x == 1.0)
    }
}

/// Sketch parameters from the rank bound, accuracy and sampling rate.
#[derive(Clone, Debug, PartialEq)]
pub struct KpParameters {
    pub sigma: f64,
    pub eta: f64,
    pub warnings: Vec<String>,
}

/// `sigma = (5/6) sqrt(eps^2 p / (8k)) ||A||_F` and `eta = 1/5`.
pub fn kp_parameters(a: &SampleMatrix, k: usize, eps: f64, p: f64) -> Result<KpParameters> {
    if k == 0 {
        return Err(Error::InvalidParameter { name: "k", reason: "must be positive".into() });
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter { name: "eps", reason: format!("must lie in (0, 1], got {eps}") });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter { name: "p", reason: format!("must lie in (0, 1], got {p}") });
    }
    let sigma = 5.0 / 6.0 * (eps * eps * p / (8.0 * k as f64)).sqrt() * a.frob();
    let mut warnings = Vec::new();
    if eps * eps > 0.2 {
        warnings.push(format!("eps^2 = {:.3} exceeds eta = 0.2; the sketch will reject these parameters", eps * eps));
    }
    if eps > (p / k as f64).sqrt() {
        warnings.push(format!("eps = {eps} exceeds sqrt(p/k) = {:.4}", (p / k as f64).sqrt()));
    }
    Ok(KpParameters { sigma, eta: 0.2, warnings })
}

/// The two size premises behind the parameter choice, checked against `T`.
/// Each unmet premise yields a warning; at desk scale they rarely hold.
pub fn kp_premise_warnings(t: &DMatrix<f64>, k: usize, eps: f64, p: f64) -> Vec<String> {
    let n = t.ncols() as f64;
    let tf = t.norm();
    let nk = (n * k as f64).sqrt();
    let mut out = Vec::new();
    let p_min = 3.0 * nk / (2f64.powf(4.5) * eps.powi(3) * tf);
    if p < p_min {
        out.push(format!("p = {p} is below 3 sqrt(nk) / (2^4.5 eps^3 ||T||_F) = {p_min:.4}"));
    }
    let t_min = 9.0 / (2f64.sqrt() * eps.powi(3)) * nk;
    if tf < t_min {
        out.push(format!("||T||_F = {tf:.3} is below 9 sqrt(nk) / (sqrt(2) eps^3) = {t_min:.3}"));
    }
    if t.iter().fold(0.0f64, |m, x| m.max(x.abs())) != 1.0 {
        out.push("max |T_ij| is not 1".into());
    }
    out
}

/// Users whose squared row norm is within a `1 + gamma` factor of the mean.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypicalUserSet {
    pub gamma: f64,
    pub zeta: f64,
    pub members: Vec<usize>,
    /// Whether `|members| >= (1 - zeta) m`, so the set qualifies.
    pub qualifies: bool,
}

impl TypicalUserSet {
    /// The largest typical set: every user passing the norm condition.
    pub fn of(t: &DMatrix<f64>, gamma: f64, zeta: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(0.0..1.0).contains(&zeta) {
            return Err(Error::InvalidParameter {
                name: "gamma/zeta",
                reason: format!("need gamma > 0 and zeta in [0, 1), got {gamma}, {zeta}"),
            });
        }
        let m = t.nrows();
        let mean = t.norm_squared() / m as f64;
        let members: Vec<usize> = (0..m)
            .filter(|&i| {
                let r = t.row(i).norm_squared();
                r >= mean / (1.0 + gamma) && r <= (1.0 + gamma) * mean
            })
            .collect();
        let qualifies = members.len() as f64 >= (1.0 - zeta) * m as f64;
        Ok(Self { gamma, zeta, members, qualifies })
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub eps: f64,
    /// Sketch size; without it the sketch derives `q` and may hit the cap.
    pub q: Option<usize>,
    pub cap: usize,
    pub seed: u64,
    /// Estimation failure probability, default `eps`.
    pub delta: Option<f64>,
}

impl PipelineConfig {
    pub fn new(eps: f64, seed: u64) -> Self {
        Self { eps, q: None, cap: DEFAULT_Q_CAP, seed, delta: None }
    }

    pub fn with_q(mut self, q: usize) -> Self {
        self.q = Some(q);
        self
    }
}

/// Recommendations drawn for one user.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UserSamples {
    pub user: usize,
    pub samples: Vec<usize>,
    pub fallbacks: usize,
    pub iterations: usize,
    pub error: Option<String>,
}

/// Sketch built once from `A` and reused for every user.
pub struct Pipeline<'a> {
    store: &'a SampleMatrix,
    params: KpParameters,
    desc: LowRankDescription,
    sampler: SamplerConfig,
}

impl<'a> Pipeline<'a> {
    pub fn build(a: &'a SampleMatrix, k: usize, p: f64, config: &PipelineConfig) -> Result<Self> {
        let params = kp_parameters(a, k, config.eps, p)?;
        let mut fkv =
            ModFkvParams::new(params.sigma, config.eps, params.eta).with_seed(config.seed).with_cap(config.cap);
        fkv.q_override = config.q;
        let desc = modfkv(a, &fkv)?;
        let mut sampler = SamplerConfig::new(config.eps);
        sampler.delta = config.delta;
        Ok(Self { store: a, params, desc, sampler })
    }

    /// Uses an existing sketch of `a`.
    pub fn from_description(a: &'a SampleMatrix, desc: LowRankDescription, sampler: SamplerConfig) -> Result<Self> {
        desc.check_store(a)?;
        let params = KpParameters { sigma: desc.sigma, eta: f64::NAN, warnings: Vec::new() };
        Ok(Self { store: a, params, desc, sampler })
    }

    pub fn parameters(&self) -> &KpParameters {
        &self.params
    }

    pub fn description(&self) -> &LowRankDescription {
        &self.desc
    }

    pub fn sampler(&self) -> Result<RowSampler<'_>> {
        RowSampler::new(&self.desc, self.store, self.sampler.clone())
    }

    /// Draws `count` recommendations for each user in parallel. User `i`
    /// gets stream `i` of a generator seeded with `seed`, so the result does
    /// not depend on scheduling. Per-user failures are recorded, not raised.
    pub fn sample_users(&self, users: &[usize], count: usize, seed: u64) -> Result<Vec<UserSamples>> {
        let sampler = self.sampler()?;
        Ok(users
            .par_iter()
            .map(|&user| {
                let mut rng = user_rng(seed, user);
                let mut out =
                    UserSamples { user, samples: Vec::with_capacity(count), fallbacks: 0, iterations: 0, error: None };
                for _ in 0..count {
                    match sampler.sample(user, &mut rng) {
                        Ok(r) => {
                            out.samples.push(r.index);
                            out.fallbacks += r.fallback as usize;
                            out.iterations += r.iterations;
                        }
                        Err(e) => {
                            out.error = Some(e.to_string());
                            break;
                        }
                    }
                }
                out
            })
            .collect())
    }
}

/// Generator for user `user` under a run seed.
pub fn user_rng(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rng
}

/// One recommendation for `user`: parameters, sketch, then one sample.
pub fn recommend<R: Rng + ?Sized>(
    instance: &PreferenceInstance,
    user: usize,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<usize> {
    let pipeline = Pipeline::build(&instance.a, instance.k, instance.p, config)?;
    Ok(pipeline.sampler()?.sample(user, rng)?.index)
}

/// How a planted `T` is generated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    /// `k` user groups by `k` product groups; a user likes its own group.
    #[default]
    Blocks,
    /// `U V^T` with uniform nonnegative rank-`k` factors, scaled to max 1.
    Factors,
}

/// Text description of a planted instance, read from TOML.
///
/// ```toml
/// m = 256
/// n = 256
/// k = 4
/// p = 0.8
/// seed = 7
/// structure = "blocks"
/// noise = 0.0
/// ```
///
/// `t_path` names a triples file holding `T` instead of generating it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub seed: u64,
    #[serde(default)]
    pub structure: Structure,
    /// Probability of flipping each entry of a binary `T`.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub t_path: Option<String>,
}

impl InstanceSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("instance spec: {e}")))
    }

    /// Reads an instance file; a relative `t_path` is resolved against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec = Self::parse(&std::fs::read_to_string(path)?)?;
        if let (Some(t), Some(dir)) = (&spec.t_path, path.parent()) {
            if Path::new(t).is_relative() {
                spec.t_path = Some(dir.join(t).to_string_lossy().into_owned());
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::InvalidParameter { name: "m/n/k", reason: "must be positive".into() });
        }
        if self.structure == Structure::Blocks && self.t_path.is_none() && (self.k > self.m || self.k > self.n) {
            return Err(Error::InvalidParameter { name: "k", reason: "more blocks than rows or columns".into() });
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidParameter { name: "p", reason: format!("must lie in (0, 1], got {}", self.p) });
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidParameter {
                name: "noise",
                reason: format!("must lie in [0, 1], got {}", self.noise),
            });
        }
        Ok(())
    }

    /// The hidden matrix `T`, deterministic in the seed.
    pub fn preference_matrix(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (m, n, k) = (self.m, self.n, self.k);
        let mut t = if let Some(path) = &self.t_path {
            let file = std::fs::File::open(path)?;
            let triples = crate::store::parse_triples(std::io::BufReader::new(file), m, n)?;
            let mut t = DMatrix::zeros(m, n);
            for (i, j, v) in triples {
                t[(i, j)] = v;
            }
            t
        } else {
            match self.structure {
                Structure::Blocks => DMatrix::from_fn(m, n, |i, j| ((i * k / m) == (j * k / n)) as u8 as f64),
                Structure::Factors => {
                    let u = DMatrix::from_fn(m, k, |_, _| rng.random::<f64>());
                    let v = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>());
                    let t = u * v.transpose();
                    let max = t.max();
                    t / max
                }
            }
        };
        if self.noise > 0.0 {
            for x in t.iter_mut() {
                if rng.random::<f64>() < self.noise {
                    *x = 1.0 - *x;
                }
            }
        }
        Ok(t)
    }

    /// `T` plus its subsample, drawn after `T` from the same seed.
    pub fn instance(&self) -> Result<PreferenceInstance> {
        let t = self.preference_matrix()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_5eed_5eed_5eed);
        PreferenceInstance::new(t, self.k, self.p, &mut rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub gamma: f64,
    pub zeta: f64,
    pub psi: f64,
    /// Entries of `T` below this are bad recommendations.
    pub bad_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { gamma: 1.0, zeta: 0.1, psi: 0.1, bad_threshold: 0.5 }
    }
}

/// What users received, plus the dense reconstruction `T_tilde` they were
/// sampled from when it is known.
#[derive(Clone, Debug, Default)]
pub struct SampleLog {
    pub users: Vec<UserSamples>,
    pub reconstruction: Option<DMatrix<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UserReport {
    pub user: usize,
    pub row_norm_sq: f64,
    pub typical: bool,
    /// Typical, and `||T_i - T_tilde_i||^2 <= eps^2 ||T||_F^2 / (psi m)`.
    pub in_s_prime: Option<bool>,
    pub samples: usize,
    /// TV between the empirical output and `D_{T_i}`.
    pub empirical_tv: Option<f64>,
    /// TV between `D_{T_tilde_i}` and `D_{T_i}`.
    pub exact_tv: Option<f64>,
    /// Fraction of samples that were bad.
    pub bad_rate: Option<f64>,
    /// Probability that a draw from `D_{T_tilde_i}` is bad.
    pub exact_bad_rate: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub m: usize,
    pub n: usize,
    pub gamma: f64,
    pub zeta: f64,
    pub psi: f64,
    pub typical_users: usize,
    pub typical_qualifies: bool,
    /// `||T - T_tilde||_F / ||T||_F`.
    pub eps_eff: Option<f64>,
    pub s_prime_users: Option<usize>,
    pub mean_exact_tv_typical: Option<f64>,
    /// `2 eps sqrt(1 + gamma) / (1 - zeta)`.
    pub avg_tv_bound: Option<f64>,
    pub max_exact_tv_s_prime: Option<f64>,
    /// `2 eps sqrt((1 + gamma) / psi)`.
    pub user_tv_bound: Option<f64>,
    pub mean_exact_bad_rate_s_prime: Option<f64>,
    pub bad_rate_bound: Option<f64>,
    pub mean_empirical_tv: Option<f64>,
    pub mean_bad_rate: Option<f64>,
    /// Whether every applicable bound holds.
    pub bounds_hold: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub users: Vec<UserReport>,
    pub summary: EvalSummary,
}

/// `eps^2 (1+eps)^2 / ((1-eps)^2 (1/sqrt(1+gamma) - eps/sqrt(psi))^2 (1-psi-zeta))`,
/// or `None` where the expression is not a valid bound.
pub fn binary_bad_rate_bound(eps: f64, gamma: f64, zeta: f64, psi: f64) -> Option<f64> {
    let gap = 1.0 / (1.0 + gamma).sqrt() - eps / psi.sqrt();
    let frac = 1.0 - psi - zeta;
    if eps >= 1.0 || gap <= 0.0 || frac <= 0.0 {
        return None;
    }
    Some(eps * eps * (1.0 + eps).powi(2) / ((1.0 - eps).powi(2) * gap * gap * frac))
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

/// Scores a sample log against the hidden `T`.
pub fn evaluate(t: &DMatrix<f64>, log: &SampleLog, config: &EvalConfig) -> Result<EvalReport> {
    let (m, n) = t.shape();
    if let Some(r) = &log.reconstruction {
        if r.shape() != (m, n) {
            return Err(Error::DimensionMismatch(format!(
                "T is {m}x{n}, reconstruction is {}x{}",
                r.nrows(),
                r.ncols()
            )));
        }
    }
    if !(config.psi > 0.0 && config.psi < 1.0 - config.zeta) {
        return Err(Error::InvalidParameter {
            name: "psi",
            reason: format!("must lie in (0, 1 - zeta) = (0, {}), got {}", 1.0 - config.zeta, config.psi),
        });
    }
    let typical = TypicalUserSet::of(t, config.gamma, config.zeta)?;
    let t_frob2 = t.norm_squared();
    let eps_eff = log.reconstruction.as_ref().map(|r| (t - r).norm() / t_frob2.sqrt());
    let s_prime_cut = eps_eff.map(|e| e * e * t_frob2 / (config.psi * m as f64));
    let binary = t.iter().all(|&x| x == 0.0 || x == 1.0);

    let mut by_user: Vec<Option<&UserSamples>> = vec![None; m];
    for u in &log.users {
        if u.user >= m {
            return Err(Error::IndexOutOfRange { index: u.user, len: m });
        }
        by_user[u.user] = Some(u);
    }

    let users: Vec<UserReport> = (0..m)
        .into_par_iter()
        .map(|i| {
            let ti: Vec<f64> = t.row(i).iter().copied().collect();
            let row_norm_sq: f64 = ti.iter().map(|x| x * x).sum();
            let target = l2_distribution(&ti).ok();
            let is_typical = typical.contains(i);
            let mut status = if target.is_none() { "empty T row".to_string() } else { "ok".to_string() };

            let (mut exact_tv, mut exact_bad_rate, mut in_s_prime) = (None, None, None);
            if let Some(r) = &log.reconstruction {
                let ri: Vec<f64> = r.row(i).iter().copied().collect();
                let err2: f64 = ti.iter().zip(&ri).map(|(a, b)| (a - b).powi(2)).sum();
                in_s_prime = Some(is_typical && err2 <= s_prime_cut.unwrap());
                if let Ok(rd) = l2_distribution(&ri) {
                    exact_bad_rate = Some((0..n).filter(|&j| ti[j] < config.bad_threshold).map(|j| rd[j]).sum());
                    exact_tv = target.as_ref().map(|td| tv_distance(td, &rd).unwrap());
                } else if status == "ok" {
                    status = "empty reconstruction row".into();
                }
            }

            let (mut samples, mut empirical_tv, mut bad_rate) = (0, None, None);
            if let Some(u) = by_user[i] {
                samples = u.samples.len();
                if let Some(e) = &u.error {
                    status = format!("sampling stopped: {e}");
                }
                if samples > 0 {
                    let mut counts = vec![0u64; n];
                    for &j in &u.samples {
                        counts[j] += 1;
                    }
                    let emp = empirical_distribution(&counts).unwrap();
                    empirical_tv = target.as_ref().map(|td| tv_distance(td, &emp).unwrap());
                    bad_rate = Some(
                        u.samples.iter().filter(|&&j| ti[j] < config.bad_threshold).count() as f64 / samples as f64,
                    );
                }
            }
            UserReport {
                user: i,
                row_norm_sq,
                typical: is_typical,
                in_s_prime,
                samples,
                empirical_tv,
                exact_tv,
                bad_rate,
                exact_bad_rate,
                status,
            }
        })
        .collect();

    let typical_tvs = || users.iter().filter(|u| u.typical).filter_map(|u| u.exact_tv);
    let s_prime = || users.iter().filter(|u| u.in_s_prime == Some(true));
    let avg_tv_bound = eps_eff.map(|e| 2.0 * e * (1.0 + config.gamma).sqrt() / (1.0 - config.zeta));
    let user_tv_bound = eps_eff.map(|e| 2.0 * e * ((1.0 + config.gamma) / config.psi).sqrt());
    let bad_rate_bound =
        eps_eff.filter(|_| binary).and_then(|e| binary_bad_rate_bound(e, config.gamma, config.zeta, config.psi));
    let mean_exact_tv_typical = log.reconstruction.as_ref().and_then(|_| mean(typical_tvs()));
    let max_exact_tv_s_prime =
        log.reconstruction.as_ref().and_then(|_| s_prime().filter_map(|u| u.exact_tv).reduce(f64::max));
    let mean_exact_bad_rate_s_prime =
        log.reconstruction.as_ref().and_then(|_| mean(s_prime().filter_map(|u| u.exact_bad_rate)));
    let s_prime_users = log.reconstruction.as_ref().map(|_| s_prime().count());

    let bounds_hold = (typical.qualifies && log.reconstruction.is_some()).then(|| {
        let tol = 1e-12;
        let avg_ok = match (mean_exact_tv_typical, avg_tv_bound) {
            (Some(v), Some(b)) => v <= b + tol,
            _ => true,
        };
        let user_ok = match (max_exact_tv_s_prime, user_tv_bound) {
            (Some(v), Some(b)) => v <= b + tol,
            _ => true,
        };
        let size_ok = s_prime_users.unwrap_or(0) as f64 >= (1.0 - config.psi - config.zeta) * m as f64 - tol;
        let bad_ok = match (mean_exact_bad_rate_s_prime, bad_rate_bound) {
            (Some(v), Some(b)) => v <= b + tol,
            _ => true,
        };
        avg_ok && user_ok && size_ok && bad_ok
    });

    let summary = EvalSummary {
        m,
        n,
        gamma: config.gamma,
        zeta: config.zeta,
        psi: config.psi,
        typical_users: typical.members.len(),
        typical_qualifies: typical.qualifies,
        eps_eff,
        s_prime_users,
        mean_exact_tv_typical,
        avg_tv_bound,
        max_exact_tv_s_prime,
        user_tv_bound,
        mean_exact_bad_rate_s_prime,
        bad_rate_bound,
        mean_empirical_tv: mean(users.iter().filter_map(|u| u.empirical_tv)),
        mean_bad_rate: mean(users.iter().filter_map(|u| u.bad_rate)),
        bounds_hold,
    };
    Ok(EvalReport { users, summary })
}

fn opt<T: std::fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "user,row_norm_sq,typical,in_s_prime,samples,empirical_tv,exact_tv,bad_rate,exact_bad_rate,status";

    /// One row per user (1-based), then a `# summary` line of `key=value`
    /// pairs. Unknown values are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for u in &self.users {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                u.user + 1,
                u.row_norm_sq,
                u.typical,
                opt(&u.in_s_prime),
                u.samples,
                opt(&u.empirical_tv),
                opt(&u.exact_tv),
                opt(&u.bad_rate),
                opt(&u.exact_bad_rate),
                u.status.replace(',', ";"),
            );
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "# summary m={} n={} gamma={} zeta={} psi={} typical_users={} typical_qualifies={} eps_eff={} \
             s_prime_users={} mean_exact_tv_typical={} avg_tv_bound={} max_exact_tv_s_prime={} user_tv_bound={} \
             mean_exact_bad_rate_s_prime={} bad_rate_bound={} mean_empirical_tv={} mean_bad_rate={} bounds_hold={}",
            s.m,
            s.n,
            s.gamma,
            s.zeta,
            s.psi,
            s.typical_users,
            s.typical_qualifies,
            opt(&s.eps_eff),
            opt(&s.s_prime_users),
            opt(&s.mean_exact_tv_typical),
            opt(&s.avg_tv_bound),
            opt(&s.max_exact_tv_s_prime),
            opt(&s.user_tv_bound),
            opt(&s.mean_exact_bad_rate_s_prime),
            opt(&s.bad_rate_bound),
            opt(&s.mean_empirical_tv),
            opt(&s.mean_bad_rate),
            opt(&s.bounds_hold),
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_probability_keeps_everything() {
        let t = DMatrix::from_fn(5, 4, |i, j| ((i + j) % 2) as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = subsample(&t, 1.0, &mut rng).unwrap();
        assert_eq!(a.to_dense(), t);
    }

    #[test]
    fn half_probability_doubles_survivors() {
        let t = DMatrix::from_element(10, 10, 1.0);
        for seed in 0..5 {
            let a = subsample(&t, 0.5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!((30..=70).contains(&a.nnz()), "{}", a.nnz());
            assert!(a.triples().iter().all(|&(_, _, v)| v == 2.0));
        }
    }

    #[test]
    fn kp_sigma_arithmetic() {
        let a = SampleMatrix::from_dense(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        let kp = kp_parameters(&a, 5, 0.2, 0.5).unwrap();
        assert!((kp.sigma - 0.018_633_899_812_498_25).abs() < 1e-12, "{}", kp.sigma);
        assert_eq!(kp.eta, 0.2);
        let kp2 = kp_parameters(&a, 10, 0.2, 0.5).unwrap();
        assert!((kp2.sigma * 2f64.sqrt() - kp.sigma).abs() < 1e-15);
    }

    #[test]
    fn typical_set_bounds() {
        let t = DMatrix::from_fn(6, 4, |i, j| if i == 5 { 0.0 } else { (j <= i % 3) as u8 as f64 });
        let s = TypicalUserSet::of(&t, 1.0, 0.5).unwrap();
        let mean = t.norm_squared() / 6.0;
        for &i in &s.members {
            let r = t.row(i).norm_squared();
            assert!(r >= mean / 2.0 && r <= 2.0 * mean);
        }
        assert!(!s.contains(5));
    }

    #[test]
    fn perfect_reconstruction_scores_zero() {
        let t = DMatrix::from_fn(8, 8, |i, j| ((i / 4) == (j / 4)) as u8 as f64);
        let log = SampleLog { users: vec![], reconstruction: Some(t.clone()) };
        let r = evaluate(&t, &log, &EvalConfig::default()).unwrap();
        assert_eq!(r.summary.eps_eff, Some(0.0));
        assert!(r.users.iter().all(|u| u.exact_tv == Some(0.0) && u.exact_bad_rate == Some(0.0)));
        assert_eq!(r.summary.bounds_hold, Some(true));
    }

    #[test]
    fn instance_file_round_trip() {
        let text = "m = 8\nn = 6\nk = 2\np = 0.5\nseed = 3\nstructure = \"factors\"\n";
        let spec = InstanceSpec::parse(text).unwrap();
        assert_eq!(spec.structure, Structure::Factors);
        let t = spec.preference_matrix().unwrap();
        assert_eq!(t, spec.preference_matrix().unwrap());
        assert!((t.max() - 1.0).abs() < 1e-15 && t.min() >= 0.0);
        assert!(InstanceSpec::parse("m = 1\nbogus = 2").is_err());
    }

    #[test]
    fn csv_has_summary_line() {
        let t = DMatrix::from_fn(4, 4, |i, j| (i == j) as u8 as f64);
        let log = SampleLog {
            users: vec![UserSamples { user: 1, samples: vec![1, 1, 0], fallbacks: 0, iterations: 3, error: None }],
            reconstruction: None,
        };
        let r = evaluate(&t, &log, &EvalConfig::default()).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[2], "2,1,true,,3,0.33333333333333337,,0.3333333333333333,,ok");
        assert!(lines[5].starts_with("# summary m=4 n=4"));
    }
}
