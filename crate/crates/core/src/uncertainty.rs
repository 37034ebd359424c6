//! Bootstrap covariance of the fitted parameters and rectangular
//! simultaneous confidence intervals for utility differences.
//!
//! Critical values come from the max statistic of the estimated limiting
//! Gaussian of the standardized differences. Gaussian draws are generated in
//! the `(M−1)`-dimensional space of utility contrasts at the covariate of
//! interest, so two pair sets evaluated at the same `(x, seed, kind)` share
//! their draws. Larger pair sets therefore never get smaller critical values.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{components, fit, fit_weighted, FitConfig, FitResult};
use crate::model::{
    contrast_basis, design_entries, param_dim, Dataset, Observations, StackedParams,
};
use crate::rng::{derive_seed, stream, PURPOSE_BOOTSTRAP, PURPOSE_GAUSSIAN};

pub const DEFAULT_BOOTSTRAP: usize = 500;
pub const DEFAULT_DRAWS: usize = 100_000;

/// Share of bootstrap replicates allowed to fail.
const MAX_FAILED_SHARE: f64 = 0.10;
const DRAW_BLOCK: usize = 4096;
const NEGATIVE_VARIANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMethod {
    PairsBootstrap,
    Supplied,
}

/// Covariance of `β̂` at the observed sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub sigma: DMatrix<f64>,
    pub replicates: usize,
    pub dropped: usize,
    pub seed: u64,
    pub method: CovarianceMethod,
}

impl CovarianceEstimate {
    /// Wraps a caller-supplied covariance matrix.
    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::InvalidInput("covariance must be square".into()));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance must be finite".into()));
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > 1e-10 * sigma.amax().max(1.0) {
            return Err(Error::InvalidInput("covariance must be symmetric".into()));
        }
        Ok(Self {
            sigma,
            replicates: 0,
            dropped: 0,
            seed: 0,
            method: CovarianceMethod::Supplied,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}

/// Pairs bootstrap: resample comparisons with replacement, refit, and take
/// the sample covariance of the refitted parameter vectors.
pub fn bootstrap_covariance(
    data: &Dataset,
    config: &FitConfig,
    replicates: usize,
    seed: u64,
) -> Result<CovarianceEstimate> {
    let base = fit(data, config)?;
    bootstrap_covariance_around(data, &base, config, replicates, seed)
}

/// Bootstrap around an existing fit of `data`. Replicate fits start from the
/// base estimate.
pub fn bootstrap_covariance_around(
    data: &Dataset,
    base: &FitResult,
    config: &FitConfig,
    replicates: usize,
    seed: u64,
) -> Result<CovarianceEstimate> {
    if replicates < 2 {
        return Err(Error::InvalidInput(
            "need at least two bootstrap replicates".into(),
        ));
    }
    if !base.converged {
        return Err(Error::NotConverged {
            iterations: base.iterations,
            gradient_norm: base.projected_gradient_norm,
        });
    }
    let obs = Observations::from_dataset(data);
    let n = data.len();
    let replicate_config = FitConfig {
        initial_params: Some(base.params.clone()),
        ..config.clone()
    };

    let fitted: Vec<Option<DVector<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, PURPOSE_BOOTSTRAP, b as u64);
            let mut weights = vec![0.0; obs.rows()];
            for _ in 0..n {
                weights[obs.record_row[rng.random_range(0..n)]] += 1.0;
            }
            let edges = (0..obs.rows())
                .filter(|&r| weights[r] > 0.0)
                .map(|r| (obs.left[r], obs.right[r]));
            if components(obs.m, edges).len() > 1 {
                return None;
            }
            let diagnostics = base.diagnostics.clone();
            match fit_weighted(&obs, &weights, &replicate_config, diagnostics) {
                Ok(r) if r.converged => Some(r.params.as_vector().clone()),
                _ => None,
            }
        })
        .collect();

    let kept: Vec<&DVector<f64>> = fitted.iter().flatten().collect();
    let dropped = replicates - kept.len();
    if dropped as f64 > MAX_FAILED_SHARE * replicates as f64 || kept.len() < 2 {
        return Err(Error::TooManyFailedReplicates {
            failed: dropped,
            total: replicates,
        });
    }

    let p = obs.p();
    let mut mean = DVector::zeros(p);
    for v in &kept {
        mean += *v;
    }
    mean /= kept.len() as f64;
    let mut sigma = DMatrix::zeros(p, p);
    for v in &kept {
        let c = *v - &mean;
        sigma.ger(1.0, &c, &c, 1.0);
    }
    sigma /= (kept.len() - 1) as f64;
    for a in 0..p {
        for b in 0..a {
            let s = 0.5 * (sigma[(a, b)] + sigma[(b, a)]);
            sigma[(a, b)] = s;
            sigma[(b, a)] = s;
        }
    }
    Ok(CovarianceEstimate {
        sigma,
        replicates,
        dropped,
        seed,
        method: CovarianceMethod::PairsBootstrap,
    })
}

/// Ordered pairs `(i, j)` at a covariate `x`; each pair targets
/// `θ_j(x) − θ_i(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pairs: Vec<(usize, usize)>,
    x: Vec<f64>,
}

impl PairSet {
    pub fn new(pairs: Vec<(usize, usize)>, x: Vec<f64>, num_models: usize) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &pairs {
            for index in [i, j] {
                if index >= num_models {
                    return Err(Error::IndexOutOfRange { index, num_models });
                }
            }
            if i == j {
                return Err(Error::SameModel(i));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidInput(format!("duplicate pair ({i}, {j})")));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariates must be finite".into()));
        }
        Ok(Self { pairs, x })
    }

    /// Every ordered pair `(i, j)`, `i ≠ j`, in lexicographic order.
    pub fn all(num_models: usize, x: Vec<f64>) -> Self {
        let pairs = (0..num_models)
            .flat_map(|i| {
                (0..num_models)
                    .filter(move |&j| j != i)
                    .map(move |j| (i, j))
            })
            .collect();
        Self { pairs, x }
    }

    /// Pairs `(k, j)` for every `k ≠ j`, so each difference is `θ_j − θ_k`.
    pub fn against(j: usize, num_models: usize, x: Vec<f64>) -> Self {
        let pairs = (0..num_models)
            .filter(|&k| k != j)
            .map(|k| (k, j))
            .collect();
        Self { pairs, x }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Max statistic used for the critical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxKind {
    Lower,
    Upper,
    Symm,
}

impl MaxKind {
    fn stream_tag(self) -> u64 {
        match self {
            MaxKind::Symm => 1,
            MaxKind::Lower => 2,
            MaxKind::Upper => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiKind {
    Lower,
    Upper,
    Symm,
    Equiv,
}

impl CiKind {
    pub const ALL: [CiKind; 4] = [CiKind::Lower, CiKind::Upper, CiKind::Symm, CiKind::Equiv];
}

/// Interval for `θ_right − θ_left`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairInterval {
    pub left: usize,
    pub right: usize,
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

impl PairInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn resolution(&self) -> Resolution {
        resolve_pair(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub symm: Option<f64>,
}

/// Rectangular confidence set: the product of `intervals`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceCISet {
    pub kind: CiKind,
    pub level: f64,
    pub x: Vec<f64>,
    pub critical: CriticalValues,
    pub intervals: Vec<PairInterval>,
}

impl DifferenceCISet {
    /// Whether every difference in `truth` (aligned with `intervals`) is covered.
    pub fn covers(&self, truth: &[f64]) -> bool {
        self.intervals
            .iter()
            .zip(truth)
            .all(|(iv, &t)| iv.contains(t))
    }

    pub fn interval(&self, left: usize, right: usize) -> Option<&PairInterval> {
        self.intervals
            .iter()
            .find(|iv| iv.left == left && iv.right == right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Above,
    Below,
    Unresolved,
}

/// Sign of a difference interval: `Above` if it lies in `(0, ∞)`, `Below` if
/// in `(−∞, 0)`, otherwise `Unresolved`.
pub fn resolve_pair(lo: f64, hi: f64) -> Resolution {
    debug_assert!(lo <= hi, "interval bounds out of order");
    if lo > 0.0 {
        Resolution::Above
    } else if hi < 0.0 {
        Resolution::Below
    } else {
        Resolution::Unresolved
    }
}

fn check_sigma(sigma: &CovarianceEstimate, m: usize, d: usize) -> Result<()> {
    let p = param_dim(m, d);
    if sigma.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: sigma.dim(),
        });
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// `x̃ᵀΣ̂x̃` for the contrast of pair `(i, j)`.
fn pair_variance(
    sigma: &DMatrix<f64>,
    i: usize,
    j: usize,
    x: &[f64],
    intercept_weight: f64,
    m: usize,
) -> f64 {
    let entries: Vec<(usize, f64)> = design_entries(i, j, x, intercept_weight, m).collect();
    let mut q = 0.0;
    for &(a, va) in &entries {
        for &(b, vb) in &entries {
            q += va * sigma[(a, b)] * vb;
        }
    }
    q
}

fn pair_se(
    sigma: &DMatrix<f64>,
    i: usize,
    j: usize,
    x: &[f64],
    intercept_weight: f64,
    m: usize,
) -> Result<f64> {
    let q = pair_variance(sigma, i, j, x, intercept_weight, m);
    if q < -NEGATIVE_VARIANCE_TOL {
        return Err(Error::NegativeVariance(q));
    }
    Ok(q.max(0.0).sqrt())
}

fn pair_estimate(
    params: &StackedParams,
    i: usize,
    j: usize,
    x: &[f64],
    intercept_weight: f64,
) -> f64 {
    design_entries(i, j, x, intercept_weight, params.num_models())
        .map(|(a, v)| v * params.as_slice()[a])
        .sum()
}

/// `sqrt(x̃_ijᵀ Σ̂ x̃_ij)`.
pub fn standard_error(
    sigma: &CovarianceEstimate,
    i: usize,
    j: usize,
    x: &[f64],
    num_models: usize,
) -> Result<f64> {
    let d = x.len();
    check_sigma(sigma, num_models, d)?;
    for index in [i, j] {
        if index >= num_models {
            return Err(Error::IndexOutOfRange { index, num_models });
        }
    }
    if i == j {
        return Err(Error::SameModel(i));
    }
    pair_se(&sigma.sigma, i, j, x, 1.0, num_models)
}

/// Gaussian sampler for utility contrasts at one covariate.
///
/// The utility vector `u = Gβ̂` at `x` has covariance `K = GΣ̂Gᵀ`. Pair
/// differences only see the component of `u` orthogonal to the ones vector,
/// so draws are `u = U·L·z` with `U` an orthonormal basis of `1^⊥` and
/// `LLᵀ = UᵀKU`.
struct ContrastSampler {
    m: usize,
    factor: DMatrix<f64>,
}

impl ContrastSampler {
    fn new(sigma: &DMatrix<f64>, m: usize, x: &[f64], intercept_weight: f64) -> Result<Self> {
        let d = x.len();
        let support = |i: usize| {
            std::iter::once((i, intercept_weight)).chain(
                x.iter()
                    .enumerate()
                    .map(move |(k, &xk)| (m + i * d + k, xk)),
            )
        };
        let mut k = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let mut s = 0.0;
                for (a, ga) in support(i) {
                    for (b, gb) in support(j) {
                        s += ga * sigma[(a, b)] * gb;
                    }
                }
                k[(i, j)] = s;
                k[(j, i)] = s;
            }
        }
        let u = contrast_basis(m);
        let mut r = u.transpose() * k * &u;
        r = (&r + r.transpose()) * 0.5;
        let n = r.nrows();
        let scale = (r.trace() / n as f64).abs();
        let base = if scale > 0.0 { scale } else { 1.0 };
        let mut jitter = 0.0;
        for _ in 0..10 {
            let mut rj = r.clone();
            for a in 0..n {
                rj[(a, a)] += jitter;
            }
            if let Some(chol) = rj.cholesky() {
                let factor = &u * chol.l();
                if factor.iter().all(|v| v.is_finite()) {
                    return Ok(Self { m, factor });
                }
            }
            jitter = if jitter == 0.0 {
                1e-12 * base
            } else {
                jitter * 10.0
            };
        }
        Err(Error::FactorizationFailure)
    }

    /// Max statistic for each of `draws` Gaussian draws.
    fn simulate(
        &self,
        pairs: &[(usize, usize)],
        se: &[f64],
        kind: MaxKind,
        draws: usize,
        seed: u64,
    ) -> Vec<f64> {
        let kind_seed = derive_seed(seed, &[kind.stream_tag()]);
        let blocks = draws.div_ceil(DRAW_BLOCK);
        let dim = self.factor.ncols();
        let per_block: Vec<Vec<f64>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream(kind_seed, PURPOSE_GAUSSIAN, b as u64);
                let count = DRAW_BLOCK.min(draws - b * DRAW_BLOCK);
                let mut z = DVector::zeros(dim);
                let mut u = DVector::zeros(self.m);
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    for v in z.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    self.factor.mul_to(&z, &mut u);
                    let t = pairs
                        .iter()
                        .zip(se)
                        .map(|(&(i, j), &s)| {
                            let zij = (u[j] - u[i]) / s;
                            match kind {
                                MaxKind::Lower => zij,
                                MaxKind::Upper => -zij,
                                MaxKind::Symm => zij.abs(),
                            }
                        })
                        .fold(f64::NEG_INFINITY, f64::max);
                    out.push(t);
                }
                out
            })
            .collect();
        per_block.into_iter().flatten().collect()
    }
}

/// Order statistic `⌈(1−α)·n⌉` (1-based).
pub(crate) fn upper_quantile(mut values: Vec<f64>, alpha: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let k = (((1.0 - alpha) * n as f64) - 1e-9).ceil() as usize;
    values[k.clamp(1, n) - 1]
}

/// Critical value over the pairs whose standard error is positive. With no
/// such pairs the intervals collapse to points and the value is zero.
fn critical_for(
    sigma: &DMatrix<f64>,
    m: usize,
    x: &[f64],
    intercept_weight: f64,
    pairs: &[(usize, usize)],
    se: &[f64],
    alpha: f64,
    kind: MaxKind,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let (live, live_se): (Vec<(usize, usize)>, Vec<f64>) = pairs
        .iter()
        .zip(se)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&p, &s)| (p, s))
        .unzip();
    if live.is_empty() {
        return Ok(0.0);
    }
    let sampler = ContrastSampler::new(sigma, m, x, intercept_weight)?;
    Ok(upper_quantile(
        sampler.simulate(&live, &live_se, kind, draws, seed),
        alpha,
    ))
}

/// Empirical `(1−α)` quantile of the max statistic over `pairs`.
pub fn critical_value(
    sigma: &CovarianceEstimate,
    pairs: &PairSet,
    num_models: usize,
    alpha: f64,
    kind: MaxKind,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if draws == 0 {
        return Err(Error::InvalidInput("draws must be positive".into()));
    }
    check_sigma(sigma, num_models, pairs.x.len())?;
    let mut se = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs.pairs {
        let s = pair_se(&sigma.sigma, i, j, &pairs.x, 1.0, num_models)?;
        if s == 0.0 {
            return Err(Error::DegeneratePair(i, j));
        }
        se.push(s);
    }
    critical_for(
        &sigma.sigma,
        num_models,
        &pairs.x,
        1.0,
        &pairs.pairs,
        &se,
        alpha,
        kind,
        draws,
        seed,
    )
}

/// Shared by the finite-covariate and the extrapolation intervals;
/// `intercept_weight = 0` drops intercepts from every contrast.
pub(crate) fn contrast_cis(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    pairs: &[(usize, usize)],
    x: &[f64],
    intercept_weight: f64,
    alpha: f64,
    kind: CiKind,
    draws: usize,
    seed: u64,
) -> Result<DifferenceCISet> {
    check_alpha(alpha)?;
    if draws == 0 {
        return Err(Error::InvalidInput("draws must be positive".into()));
    }
    let m = params.num_models();
    if x.len() != params.covariate_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.covariate_dim(),
            found: x.len(),
        });
    }
    check_sigma(sigma, m, x.len())?;
    let mut estimates = Vec::with_capacity(pairs.len());
    let mut se = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        estimates.push(pair_estimate(params, i, j, x, intercept_weight));
        se.push(pair_se(&sigma.sigma, i, j, x, intercept_weight, m)?);
    }
    let crit = |a: f64, k: MaxKind| {
        critical_for(
            &sigma.sigma,
            m,
            x,
            intercept_weight,
            pairs,
            &se,
            a,
            k,
            draws,
            seed,
        )
    };
    let mut critical = CriticalValues::default();
    let bounds: Box<dyn Fn(f64, f64) -> (f64, f64)> = match kind {
        CiKind::Lower => {
            let t = crit(alpha, MaxKind::Lower)?;
            critical.lower = Some(t);
            Box::new(move |est, s| (est - t * s, f64::INFINITY))
        }
        CiKind::Upper => {
            let t = crit(alpha, MaxKind::Upper)?;
            critical.upper = Some(t);
            Box::new(move |est, s| (f64::NEG_INFINITY, est + t * s))
        }
        CiKind::Symm => {
            let t = crit(alpha, MaxKind::Symm)?;
            critical.symm = Some(t);
            Box::new(move |est, s| (est - t * s, est + t * s))
        }
        CiKind::Equiv => {
            let tl = crit(alpha / 2.0, MaxKind::Lower)?;
            let tu = crit(alpha / 2.0, MaxKind::Upper)?;
            critical.lower = Some(tl);
            critical.upper = Some(tu);
            Box::new(move |est, s| (est - tl * s, est + tu * s))
        }
    };
    let intervals = pairs
        .iter()
        .zip(estimates.iter().zip(&se))
        .map(|(&(left, right), (&estimate, &s))| {
            let (lo, hi) = bounds(estimate, s);
            PairInterval {
                left,
                right,
                estimate,
                se: s,
                lo,
                hi,
            }
        })
        .collect();
    Ok(DifferenceCISet {
        kind,
        level: 1.0 - alpha,
        x: x.to_vec(),
        critical,
        intervals,
    })
}

/// Rectangular simultaneous intervals for `θ_j(x) − θ_i(x)` over `pairs`.
///
/// Pairs with zero standard error get point intervals at the estimate and do
/// not enter the max statistic.
pub fn difference_cis(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    pairs: &PairSet,
    alpha: f64,
    kind: CiKind,
    draws: usize,
    seed: u64,
) -> Result<DifferenceCISet> {
    contrast_cis(
        params,
        sigma,
        &pairs.pairs,
        &pairs.x,
        1.0,
        alpha,
        kind,
        draws,
        seed,
    )
}
