//! Rank confidence sets built from rectangular difference intervals, rank
//! curves along covariate paths, and the limits of ranks and intervals as
//! the covariate grows along a fixed direction.
//!
//! For model `j` and rival `k`, let `C_jk` be the interval for `θ_j − θ_k`.
//! `k` is dominated by `j` when `C_jk ⊂ (0, ∞)` and dominates `j` when
//! `C_jk ⊂ (−∞, 0)`. The rank set of `j` is `{|N⁻| + 1, …, M − |N⁺|}`.
//! Rank sets always come from symmetric intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::ranks_from_utilities;
use crate::model::StackedParams;
use crate::uncertainty::{
    contrast_cis, resolve_pair, CiKind, CovarianceEstimate, DifferenceCISet, PairInterval, PairSet,
    Resolution,
};

/// Projections closer than this count as ties in the extrapolation limit.
pub const DISTINCTNESS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankScope {
    Marginal,
    Simultaneous,
}

/// Contiguous rank interval `[lo, hi]` for one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSet {
    pub model: usize,
    pub lo: usize,
    pub hi: usize,
    /// `|N⁺|`: rivals statistically below this model.
    pub n_dominated: usize,
    /// `|N⁻|`: rivals statistically above this model.
    pub n_dominating: usize,
    pub level: f64,
    pub scope: RankScope,
}

impl RankSet {
    pub fn contains(&self, rank: usize) -> bool {
        self.lo <= rank && rank <= self.hi
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }
}

/// Rank set of `model` from intervals `(lo, hi)` for `θ_model − θ_k`, one per rival.
pub fn rank_set_from_differences(
    model: usize,
    num_models: usize,
    differences: impl IntoIterator<Item = (f64, f64)>,
    level: f64,
    scope: RankScope,
) -> RankSet {
    let (mut above, mut below) = (0, 0);
    for (lo, hi) in differences {
        match resolve_pair(lo, hi) {
            Resolution::Above => above += 1,
            Resolution::Below => below += 1,
            Resolution::Unresolved => {}
        }
    }
    RankSet {
        model,
        lo: below + 1,
        hi: num_models - above,
        n_dominated: above,
        n_dominating: below,
        level,
        scope,
    }
}

/// Interval for `θ_j − θ_k`, read from pair `(k, j)` or mirrored from `(j, k)`.
fn difference_toward(intervals: &[PairInterval], j: usize, k: usize) -> Option<(f64, f64)> {
    intervals.iter().find_map(|iv| {
        if iv.left == k && iv.right == j {
            Some((iv.lo, iv.hi))
        } else if iv.left == j && iv.right == k {
            Some((-iv.hi, -iv.lo))
        } else {
            None
        }
    })
}

/// Rank sets for every model from one rectangular set over all pairs.
pub fn rank_sets_from_intervals(
    num_models: usize,
    intervals: &[PairInterval],
    level: f64,
    scope: RankScope,
) -> Result<Vec<RankSet>> {
    (0..num_models)
        .map(|j| {
            let diffs = (0..num_models)
                .filter(|&k| k != j)
                .map(|k| {
                    difference_toward(intervals, j, k).ok_or_else(|| {
                        Error::InvalidInput(format!("no interval for pair ({k}, {j})"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(rank_set_from_differences(
                j, num_models, diffs, level, scope,
            ))
        })
        .collect()
}

fn check_models(params: &StackedParams) -> Result<()> {
    if params.num_models() < 2 {
        return Err(Error::InvalidInput("need at least two models".into()));
    }
    Ok(())
}

fn marginal_with(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    x: &[f64],
    intercept_weight: f64,
    j: usize,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<RankSet> {
    let m = params.num_models();
    if j >= m {
        return Err(Error::IndexOutOfRange {
            index: j,
            num_models: m,
        });
    }
    let pairs = PairSet::against(j, m, x.to_vec());
    let set = contrast_cis(
        params,
        sigma,
        pairs.pairs(),
        x,
        intercept_weight,
        alpha,
        CiKind::Symm,
        draws,
        seed,
    )?;
    let diffs = set.intervals.iter().map(|iv| (iv.lo, iv.hi));
    Ok(rank_set_from_differences(
        j,
        m,
        diffs,
        1.0 - alpha,
        RankScope::Marginal,
    ))
}

fn simultaneous_with(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    x: &[f64],
    intercept_weight: f64,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<(DifferenceCISet, Vec<RankSet>)> {
    let m = params.num_models();
    let pairs = PairSet::all(m, x.to_vec());
    let set = contrast_cis(
        params,
        sigma,
        pairs.pairs(),
        x,
        intercept_weight,
        alpha,
        CiKind::Symm,
        draws,
        seed,
    )?;
    let sets = rank_sets_from_intervals(m, &set.intervals, 1.0 - alpha, RankScope::Simultaneous)?;
    Ok((set, sets))
}

/// Marginal rank set of model `j` at `x`, from symmetric intervals over
/// `{(k, j) : k ≠ j}`.
pub fn marginal_rank_set(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    x: &[f64],
    j: usize,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<RankSet> {
    check_models(params)?;
    marginal_with(params, sigma, x, 1.0, j, alpha, draws, seed)
}

/// Marginal sets for every model. Each is valid on its own; they carry no
/// joint guarantee.
pub fn marginal_rank_sets(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    x: &[f64],
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<RankSet>> {
    check_models(params)?;
    (0..params.num_models())
        .map(|j| marginal_with(params, sigma, x, 1.0, j, alpha, draws, seed))
        .collect()
}

/// Simultaneous rank sets from one critical value over all ordered pairs.
pub fn simultaneous_rank_sets(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    x: &[f64],
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<RankSet>> {
    check_models(params)?;
    Ok(simultaneous_with(params, sigma, x, 1.0, alpha, draws, seed)?.1)
}

pub fn rank_sets(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    x: &[f64],
    alpha: f64,
    scope: RankScope,
    draws: usize,
    seed: u64,
) -> Result<Vec<RankSet>> {
    match scope {
        RankScope::Marginal => marginal_rank_sets(params, sigma, x, alpha, draws, seed),
        RankScope::Simultaneous => simultaneous_rank_sets(params, sigma, x, alpha, draws, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCurvePoint {
    pub x: Vec<f64>,
    pub utilities: Vec<f64>,
    pub point_ranks: Vec<usize>,
    pub rank_sets: Vec<RankSet>,
}

/// Point ranks and rank sets at every covariate of `path`, in path order.
pub fn rank_curve(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    path: &[Vec<f64>],
    alpha: f64,
    scope: RankScope,
    draws: usize,
    seed: u64,
) -> Result<Vec<RankCurvePoint>> {
    if path.is_empty() {
        return Err(Error::InvalidInput("covariate path is empty".into()));
    }
    path.par_iter()
        .map(|x| {
            let utilities = params.utilities(x)?;
            let point_ranks = ranks_from_utilities(&utilities);
            let rank_sets = rank_sets(params, sigma, x, alpha, scope, draws, seed)?;
            Ok(RankCurvePoint {
                x: x.clone(),
                utilities,
                point_ranks,
                rank_sets,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingRanks {
    /// `vᵀβ̂_m` per model.
    pub projections: Vec<f64>,
    pub ranks: Vec<usize>,
    /// Pairs `(i, j)`, `i < j`, whose projections coincide.
    pub tied_pairs: Vec<(usize, usize)>,
}

impl LimitingRanks {
    pub fn all_distinct(&self) -> bool {
        self.tied_pairs.is_empty()
    }
}

/// Ranks in the limit `x = λv`, `λ → ∞`: the order of `vᵀβ̂_m`. Tied
/// projections are flagged and share the better rank.
pub fn limiting_ranks(params: &StackedParams, v: &[f64]) -> Result<LimitingRanks> {
    if params.covariate_dim() == 0 {
        return Err(Error::InvalidInput(
            "extrapolation needs at least one covariate".into(),
        ));
    }
    let projections = params.slope_projections(v)?;
    let m = projections.len();
    let tied_pairs = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .filter(|&(i, j)| (projections[i] - projections[j]).abs() <= DISTINCTNESS_TOL)
        .collect();
    Ok(LimitingRanks {
        ranks: ranks_from_utilities(&projections),
        projections,
        tied_pairs,
    })
}

/// Limit of `λ⁻¹·C_symm(λv)` over all ordered pairs: intervals
/// `vᵀ(β̂_j − β̂_i) ± t∞·sqrt(ṽᵀΣ̂ṽ)` where `ṽ` is the slope-only contrast and
/// `t∞` the max-statistic quantile of the slope-only Gaussian.
pub fn limiting_difference_cis(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    v: &[f64],
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<DifferenceCISet> {
    check_models(params)?;
    if params.covariate_dim() == 0 {
        return Err(Error::InvalidInput(
            "extrapolation needs at least one covariate".into(),
        ));
    }
    let pairs = PairSet::all(params.num_models(), v.to_vec());
    contrast_cis(
        params,
        sigma,
        pairs.pairs(),
        v,
        0.0,
        alpha,
        CiKind::Symm,
        draws,
        seed,
    )
}

pub fn limiting_rank_sets(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    v: &[f64],
    alpha: f64,
    scope: RankScope,
    draws: usize,
    seed: u64,
) -> Result<Vec<RankSet>> {
    check_models(params)?;
    if params.covariate_dim() == 0 {
        return Err(Error::InvalidInput(
            "extrapolation needs at least one covariate".into(),
        ));
    }
    match scope {
        RankScope::Marginal => (0..params.num_models())
            .map(|j| marginal_with(params, sigma, v, 0.0, j, alpha, draws, seed))
            .collect(),
        RankScope::Simultaneous => {
            Ok(simultaneous_with(params, sigma, v, 0.0, alpha, draws, seed)?.1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    pub direction: Vec<f64>,
    pub limiting_ranks: LimitingRanks,
    pub limiting_intervals: DifferenceCISet,
    pub limiting_rank_sets: Vec<RankSet>,
}

pub fn extrapolate(
    params: &StackedParams,
    sigma: &CovarianceEstimate,
    v: &[f64],
    alpha: f64,
    scope: RankScope,
    draws: usize,
    seed: u64,
) -> Result<ExtrapolationResult> {
    let limiting_ranks = limiting_ranks(params, v)?;
    let limiting_intervals = limiting_difference_cis(params, sigma, v, alpha, draws, seed)?;
    let limiting_rank_sets = match scope {
        RankScope::Simultaneous => rank_sets_from_intervals(
            params.num_models(),
            &limiting_intervals.intervals,
            1.0 - alpha,
            RankScope::Simultaneous,
        )?,
        RankScope::Marginal => limiting_rank_sets(params, sigma, v, alpha, scope, draws, seed)?,
    };
    Ok(ExtrapolationResult {
        direction: v.to_vec(),
        limiting_ranks,
        limiting_intervals,
        limiting_rank_sets,
    })
}
