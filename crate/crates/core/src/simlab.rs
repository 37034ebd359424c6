//! Synthetic data under a known contextual BTL model, Monte Carlo coverage
//! experiments, and brute-force oracles.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{components, fit, ranks_from_utilities, FitConfig};
use crate::model::{sigmoid, ComparisonRecord, Dataset, Observations, StackedParams};
use crate::rank_sets::{marginal_rank_sets, rank_sets_from_intervals, RankScope};
use crate::rng::{derive_seed, stream, PURPOSE_GENERATE, PURPOSE_REPLICATION};
use crate::uncertainty::{
    bootstrap_covariance_around, difference_cis, CiKind, PairSet, DEFAULT_BOOTSTRAP, DEFAULT_DRAWS,
};

/// Largest free dimension the grid oracle will enumerate.
pub const GRID_MAX_DIM: usize = 3;
/// Fewest replications accepted by [`run_coverage`].
pub const MIN_REPLICATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairProbability {
    pub left: usize,
    pub right: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateSampler {
    /// Independent uniform coordinates on `[lo_k, hi_k]`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Uniform choice from a list of points.
    FixedList { points: Vec<Vec<f64>> },
    /// Independent 0/1 coordinates with `P(x_k = 1) = probabilities[k]`.
    Bernoulli { probabilities: Vec<f64> },
}

impl CovariateSampler {
    pub fn dim(&self) -> usize {
        match self {
            CovariateSampler::UniformBox { lo, .. } => lo.len(),
            CovariateSampler::FixedList { points } => points.first().map_or(0, Vec::len),
            CovariateSampler::Bernoulli { probabilities } => probabilities.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.into()));
        match self {
            CovariateSampler::UniformBox { lo, hi } => {
                if lo.len() != hi.len() {
                    return bad("uniform box bounds differ in length");
                }
                if lo
                    .iter()
                    .zip(hi)
                    .any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b))
                {
                    return bad("uniform box needs finite lo <= hi");
                }
            }
            CovariateSampler::FixedList { points } => {
                if points.is_empty() {
                    return bad("fixed covariate list is empty");
                }
                let d = points[0].len();
                if points
                    .iter()
                    .any(|p| p.len() != d || p.iter().any(|v| !v.is_finite()))
                {
                    return bad("fixed covariate list needs finite points of equal length");
                }
            }
            CovariateSampler::Bernoulli { probabilities } => {
                if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("Bernoulli probabilities must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            CovariateSampler::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&a, &b)| if a == b { a } else { rng.random_range(a..b) })
                .collect(),
            CovariateSampler::FixedList { points } => {
                points[rng.random_range(0..points.len())].clone()
            }
            CovariateSampler::Bernoulli { probabilities } => probabilities
                .iter()
                .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

/// Ground truth and sampling design for synthetic comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub true_params: StackedParams,
    pub pair_probabilities: Vec<PairProbability>,
    pub covariate_sampler: CovariateSampler,
    pub num_records: usize,
    pub seed: u64,
}

impl Scenario {
    /// Every unordered pair with equal probability, oriented `(i, j)` with `i < j`.
    pub fn uniform_pairs(
        true_params: StackedParams,
        covariate_sampler: CovariateSampler,
        num_records: usize,
        seed: u64,
    ) -> Self {
        let m = true_params.num_models();
        let n = m * m.saturating_sub(1) / 2;
        let pair_probabilities = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .map(|(left, right)| PairProbability {
                left,
                right,
                probability: 1.0 / n as f64,
            })
            .collect();
        Self {
            true_params,
            pair_probabilities,
            covariate_sampler,
            num_records,
            seed,
        }
    }

    pub fn num_models(&self) -> usize {
        self.true_params.num_models()
    }

    pub fn covariate_dim(&self) -> usize {
        self.true_params.covariate_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_models();
        if m < 2 {
            return Err(Error::InvalidInput("need at least two models".into()));
        }
        if !self.true_params.is_normalized() {
            return Err(Error::NotNormalized {
                residual: self.true_params.normalization_residual(),
            });
        }
        if self.num_records == 0 {
            return Err(Error::InvalidInput(
                "scenario needs at least one record".into(),
            ));
        }
        self.covariate_sampler.validate()?;
        if self.covariate_sampler.dim() != self.covariate_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.covariate_dim(),
                found: self.covariate_sampler.dim(),
            });
        }
        if self.pair_probabilities.is_empty() {
            return Err(Error::InvalidInput("no comparison pairs".into()));
        }
        let mut total = 0.0;
        for pp in &self.pair_probabilities {
            for index in [pp.left, pp.right] {
                if index >= m {
                    return Err(Error::IndexOutOfRange {
                        index,
                        num_models: m,
                    });
                }
            }
            if pp.left == pp.right {
                return Err(Error::SameModel(pp.left));
            }
            if !(pp.probability > 0.0 && pp.probability.is_finite()) {
                return Err(Error::InvalidInput(
                    "pair probabilities must be positive".into(),
                ));
            }
            total += pp.probability;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "pair probabilities sum to {total}, not 1"
            )));
        }
        let comps = components(
            m,
            self.pair_probabilities.iter().map(|pp| (pp.left, pp.right)),
        );
        if comps.len() > 1 {
            return Err(Error::DisconnectedGraph { components: comps });
        }
        Ok(())
    }

    /// `Δ_ij(x) = θ*_j(x) − θ*_i(x)` for each pair.
    pub fn true_differences(&self, pairs: &[(usize, usize)], x: &[f64]) -> Result<Vec<f64>> {
        let u = self.true_params.utilities(x)?;
        Ok(pairs.iter().map(|&(i, j)| u[j] - u[i]).collect())
    }
}

fn sample_records(scenario: &Scenario, rng: &mut impl Rng) -> Result<Vec<ComparisonRecord>> {
    let pick = WeightedIndex::new(scenario.pair_probabilities.iter().map(|pp| pp.probability))
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    (0..scenario.num_records)
        .map(|_| {
            let pp = &scenario.pair_probabilities[pick.sample(rng)];
            let x = scenario.covariate_sampler.sample(rng);
            let diff = scenario.true_params.utility_unchecked(pp.right, &x)
                - scenario.true_params.utility_unchecked(pp.left, &x);
            let outcome = rng.random::<f64>() < sigmoid(diff);
            ComparisonRecord::new(pp.left, pp.right, x, outcome)
        })
        .collect()
}

/// Draws `num_records` comparisons: a pair by its probability, then a
/// covariate, then the outcome from the true model.
pub fn generate(scenario: &Scenario) -> Result<Dataset> {
    generate_replicate(scenario, 0)
}

/// Dataset for Monte Carlo replication `rep`; independent across `rep`.
pub fn generate_replicate(scenario: &Scenario, rep: u64) -> Result<Dataset> {
    scenario.validate()?;
    let mut rng = stream(scenario.seed, PURPOSE_GENERATE, rep);
    let records = sample_records(scenario, &mut rng)?;
    Dataset::anonymous(scenario.num_models(), scenario.covariate_dim(), records)
}

/// `r_j = 1 + #{k : θ*_k(x) > θ*_j(x)}`.
pub fn true_ranks(params: &StackedParams, x: &[f64]) -> Result<Vec<usize>> {
    Ok(ranks_from_utilities(&params.utilities(x)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub bootstrap: usize,
    pub draws: usize,
    pub fit: FitConfig,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            bootstrap: DEFAULT_BOOTSTRAP,
            draws: DEFAULT_DRAWS,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DifferenceCoverage {
    pub lower: f64,
    pub upper: f64,
    pub symm: f64,
    pub equiv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replications: usize,
    pub successes: usize,
    pub failures: usize,
    pub nominal: f64,
    pub eval_x: Vec<f64>,
    pub true_ranks: Vec<usize>,
    /// Joint coverage of all ordered-pair differences, per interval kind.
    pub difference_coverage: DifferenceCoverage,
    pub marginal_coverage: Vec<f64>,
    pub simultaneous_coverage: f64,
    pub mean_marginal_width: Vec<f64>,
    pub mean_simultaneous_width: Vec<f64>,
}

struct RepOutcome {
    differences: [bool; 4],
    marginal: Vec<bool>,
    simultaneous: bool,
    marginal_width: Vec<usize>,
    simultaneous_width: Vec<usize>,
}

fn run_replicate(
    scenario: &Scenario,
    rep: u64,
    alpha: f64,
    eval_x: &[f64],
    pairs: &PairSet,
    truth: &[f64],
    ranks: &[usize],
    config: &CoverageConfig,
) -> Result<RepOutcome> {
    let data = generate_replicate(scenario, rep)?;
    let base = fit(&data, &config.fit)?;
    let boot_seed = derive_seed(scenario.seed, &[PURPOSE_REPLICATION, rep, 1]);
    let draw_seed = derive_seed(scenario.seed, &[PURPOSE_REPLICATION, rep, 2]);
    let sigma =
        bootstrap_covariance_around(&data, &base, &config.fit, config.bootstrap, boot_seed)?;
    let params = &base.params;

    let mut differences = [false; 4];
    let mut symm_set = None;
    for (slot, kind) in CiKind::ALL.into_iter().enumerate() {
        let set = difference_cis(params, &sigma, pairs, alpha, kind, config.draws, draw_seed)?;
        differences[slot] = set.covers(truth);
        if kind == CiKind::Symm {
            symm_set = Some(set);
        }
    }
    let symm_set = symm_set.expect("symm kind is always evaluated");
    let m = scenario.num_models();
    let simultaneous_sets =
        rank_sets_from_intervals(m, &symm_set.intervals, 1.0 - alpha, RankScope::Simultaneous)?;
    let marginal_sets = marginal_rank_sets(params, &sigma, eval_x, alpha, config.draws, draw_seed)?;

    Ok(RepOutcome {
        differences,
        marginal: marginal_sets
            .iter()
            .map(|s| s.contains(ranks[s.model]))
            .collect(),
        simultaneous: simultaneous_sets.iter().all(|s| s.contains(ranks[s.model])),
        marginal_width: marginal_sets.iter().map(|s| s.width()).collect(),
        simultaneous_width: simultaneous_sets.iter().map(|s| s.width()).collect(),
    })
}

/// Monte Carlo coverage of difference intervals and rank sets at `eval_x`.
///
/// Each replication generates fresh data, fits, bootstraps, and checks the
/// true differences and true ranks. Replications whose fit or bootstrap fails
/// are counted as failures and left out of the coverage rates.
pub fn run_coverage(
    scenario: &Scenario,
    reps: usize,
    alpha: f64,
    eval_x: &[f64],
    config: &CoverageConfig,
) -> Result<CoverageReport> {
    scenario.validate()?;
    if reps < MIN_REPLICATIONS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_REPLICATIONS} replications"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
    }
    if eval_x.len() != scenario.covariate_dim() {
        return Err(Error::DimensionMismatch {
            expected: scenario.covariate_dim(),
            found: eval_x.len(),
        });
    }
    config.fit.validate()?;
    let m = scenario.num_models();
    let pairs = PairSet::all(m, eval_x.to_vec());
    let truth = scenario.true_differences(pairs.pairs(), eval_x)?;
    let ranks = true_ranks(&scenario.true_params, eval_x)?;

    let outcomes: Vec<Option<RepOutcome>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| run_replicate(scenario, rep, alpha, eval_x, &pairs, &truth, &ranks, config).ok())
        .collect();

    let done: Vec<&RepOutcome> = outcomes.iter().flatten().collect();
    let successes = done.len();
    let rate = |count: usize| {
        if successes == 0 {
            0.0
        } else {
            count as f64 / successes as f64
        }
    };
    let kind_rate = |slot: usize| rate(done.iter().filter(|o| o.differences[slot]).count());
    let mean_width = |pick: &dyn Fn(&RepOutcome) -> usize| rate(done.iter().map(|o| pick(o)).sum());

    Ok(CoverageReport {
        replications: reps,
        successes,
        failures: reps - successes,
        nominal: 1.0 - alpha,
        eval_x: eval_x.to_vec(),
        difference_coverage: DifferenceCoverage {
            lower: kind_rate(0),
            upper: kind_rate(1),
            symm: kind_rate(2),
            equiv: kind_rate(3),
        },
        marginal_coverage: (0..m)
            .map(|j| rate(done.iter().filter(|o| o.marginal[j]).count()))
            .collect(),
        simultaneous_coverage: rate(done.iter().filter(|o| o.simultaneous).count()),
        mean_marginal_width: (0..m)
            .map(|j| mean_width(&|o| o.marginal_width[j]))
            .collect(),
        mean_simultaneous_width: (0..m)
            .map(|j| mean_width(&|o| o.simultaneous_width[j]))
            .collect(),
        true_ranks: ranks,
    })
}

/// Exhaustive NLL minimization over a grid on the feasible subspace.
///
/// The free coordinates are the intercepts and slopes of the first `M − 1`
/// models; the last model takes minus their sum. Each free coordinate ranges
/// over `−box, −box + step, …` up to `box`.
pub fn grid_mle_oracle(data: &Dataset, grid_step: f64, grid_box: f64) -> Result<StackedParams> {
    let (m, d) = (data.num_models(), data.covariate_dim());
    if m < 2 {
        return Err(Error::InvalidInput("need at least two models".into()));
    }
    let dim = (m - 1) * (1 + d);
    if dim > GRID_MAX_DIM {
        return Err(Error::DimensionTooLarge {
            dim,
            max: GRID_MAX_DIM,
        });
    }
    if !(grid_step > 0.0 && grid_box >= 0.0 && grid_box.is_finite()) {
        return Err(Error::InvalidInput(
            "grid needs step > 0 and a finite box".into(),
        ));
    }
    let per_axis = (2.0 * grid_box / grid_step + 1e-9).floor() as usize + 1;
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| -grid_box + i as f64 * grid_step)
        .collect();
    let obs = Observations::from_dataset(data);

    let expand = |free: &[f64]| -> StackedParams {
        let column = |c: usize| -> Vec<f64> {
            let mut v: Vec<f64> = free[c * (m - 1)..(c + 1) * (m - 1)].to_vec();
            v.push(-v.iter().sum::<f64>());
            v
        };
        let intercepts = column(0);
        let cols: Vec<Vec<f64>> = (1..=d).map(column).collect();
        let slopes = (0..m)
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        StackedParams::from_parts(intercepts, slopes).expect("grid point has consistent shape")
    };

    let total = per_axis.pow(dim as u32);
    let mut best: Option<(f64, StackedParams)> = None;
    let mut free = vec![0.0; dim];
    for flat in 0..total {
        let mut rest = flat;
        for slot in free.iter_mut() {
            *slot = axis[rest % per_axis];
            rest /= per_axis;
        }
        let candidate = expand(&free);
        let nll = obs.nll(candidate.as_slice(), &obs.counts);
        if best.as_ref().is_none_or(|(b, _)| nll < *b) {
            best = Some((nll, candidate));
        }
    }
    Ok(best.expect("grid is never empty").1)
}

/// Rank sets recomputed from ordered-pair intervals by enumerating every
/// sign pattern the intervals allow.
///
/// `intervals` holds `(i, j, lo, hi)` bounds on `θ_j − θ_i` and must cover
/// every pair in at least one orientation. Returns `(lo, hi)` per model.
pub fn exact_rankset_oracle(
    intervals: &[(usize, usize, f64, f64)],
    num_models: usize,
) -> Result<Vec<(usize, usize)>> {
    // allowed[j][k] = (k may sit above j, k may sit below j)
    let mut allowed = vec![vec![(true, true); num_models]; num_models];
    let mut seen = vec![vec![false; num_models]; num_models];
    for &(i, j, lo, hi) in intervals {
        if i >= num_models || j >= num_models {
            return Err(Error::IndexOutOfRange {
                index: i.max(j),
                num_models,
            });
        }
        if i == j {
            return Err(Error::SameModel(i));
        }
        // θ_j − θ_i ∈ [lo, hi]: j above i needs some positive value, below needs some negative.
        let j_above_i = hi > 0.0;
        let j_below_i = lo < 0.0;
        let a = &mut allowed[i][j];
        *a = (a.0 && j_above_i, a.1 && j_below_i);
        let b = &mut allowed[j][i];
        *b = (b.0 && j_below_i, b.1 && j_above_i);
        seen[i][j] = true;
        seen[j][i] = true;
    }
    for (i, row) in seen.iter().enumerate() {
        if let Some(j) = (0..num_models).find(|&j| j != i && !row[j]) {
            return Err(Error::InvalidInput(format!(
                "no interval for pair ({i}, {j})"
            )));
        }
    }

    let mut out = Vec::with_capacity(num_models);
    for (j, row) in allowed.iter().enumerate() {
        let rivals: Vec<usize> = (0..num_models).filter(|&k| k != j).collect();
        let mut best = (usize::MAX, 0);
        for mask in 0u64..(1u64 << rivals.len()) {
            let mut above = 0;
            let mut feasible = true;
            for (bit, &k) in rivals.iter().enumerate() {
                let is_above = mask >> bit & 1 == 1;
                let (can_above, can_below) = row[k];
                if (is_above && !can_above) || (!is_above && !can_below) {
                    feasible = false;
                    break;
                }
                above += usize::from(is_above);
            }
            if feasible {
                best = (best.0.min(above + 1), best.1.max(above + 1));
            }
        }
        out.push(best);
    }
    Ok(out)
}
