//! Identifiability diagnostics and the constrained maximum-likelihood fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    feasible_basis, feasible_dim, project_feasible, Dataset, Observations, StackedParams,
    SEPARATION_MARGIN,
};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Stopping tolerance on `‖P∇ℓ‖∞`.
    pub gradient_tolerance: f64,
    pub line_search_shrink: f64,
    pub initial_params: Option<StackedParams>,
    /// Adds `ridge/2·‖β̃‖²` to the objective. Zero fits the plain MLE.
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            line_search_shrink: 0.5,
            initial_params: None,
            ridge: 0.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidInput(
                "gradient_tolerance must be positive".into(),
            ));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(Error::InvalidInput(
                "line_search_shrink must lie in (0, 1)".into(),
            ));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::InvalidInput(
                "ridge must be a finite non-negative number".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Numerical ranks of the covariate design `x̄_l = e_j⊗x_l − e_i⊗x_l` and of
/// the full stacked design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankReport {
    pub covariate_rank: usize,
    /// `M·d`; never attained, since the rows sum to zero across models.
    pub covariate_columns: usize,
    /// `(M−1)·d`, the rank required on the constrained space.
    pub covariate_required: usize,
    pub full_rank: bool,
    pub full_rank_constrained: bool,
    pub design_rank: usize,
    /// `(M−1)(1+d)`.
    pub design_required: usize,
    pub design_full_rank: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub components: Vec<Vec<usize>>,
    pub rank: RankReport,
    pub max_abs_margin: f64,
    pub separation_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: StackedParams,
    pub final_nll: f64,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: FitDiagnostics,
    /// Objective value at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
}

/// Connected components of the comparison graph, each sorted, ordered by
/// smallest member.
pub fn check_connectivity(data: &Dataset) -> Vec<Vec<usize>> {
    components(
        data.num_models(),
        data.records().iter().map(|r| (r.left, r.right)),
    )
}

pub(crate) fn components(m: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for (i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; m];
    for v in 0..m {
        let root = find(&mut parent, v);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(v);
    }
    groups
}

/// Rank from singular values, threshold `max(rows, cols)·ε·σ_max`.
pub(crate) fn numerical_rank(matrix: DMatrix<f64>) -> usize {
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return 0;
    }
    let threshold_scale = rows.max(cols) as f64 * f64::EPSILON;
    let reduced = if rows > 2 * cols {
        matrix.qr().r()
    } else {
        matrix
    };
    let sv = reduced.singular_values();
    let largest = sv.max();
    if largest == 0.0 {
        return 0;
    }
    sv.iter()
        .filter(|&&s| s > threshold_scale * largest)
        .count()
}

fn rank_report(obs: &Observations, weights: &[f64]) -> RankReport {
    let (m, d) = (obs.m, obs.d);
    let rows: Vec<usize> = (0..obs.rows()).filter(|&r| weights[r] > 0.0).collect();
    let mut cov = DMatrix::zeros(rows.len(), m * d);
    let mut full = DMatrix::zeros(rows.len(), m * (1 + d));
    for (out, &r) in rows.iter().enumerate() {
        let (i, j) = (obs.left[r], obs.right[r]);
        full[(out, i)] = -1.0;
        full[(out, j)] = 1.0;
        for k in 0..d {
            let xk = obs.x[r * d + k];
            cov[(out, i * d + k)] = -xk;
            cov[(out, j * d + k)] = xk;
            full[(out, m + i * d + k)] = -xk;
            full[(out, m + j * d + k)] = xk;
        }
    }
    let covariate_required = (m - 1) * d;
    let (covariate_rank, full_rank, full_rank_constrained) = if d == 0 {
        (0, true, true)
    } else {
        let r = numerical_rank(cov);
        (r, r == m * d, r >= covariate_required)
    };
    let design_required = feasible_dim(m, d);
    let design_rank = numerical_rank(full);
    RankReport {
        covariate_rank,
        covariate_columns: m * d,
        covariate_required,
        full_rank,
        full_rank_constrained,
        design_rank,
        design_required,
        design_full_rank: design_rank >= design_required,
    }
}

pub fn check_design_rank(data: &Dataset) -> RankReport {
    let obs = Observations::from_dataset(data);
    rank_report(&obs, &obs.counts)
}

pub(crate) struct NewtonOutcome {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

fn objective(obs: &Observations, weights: &[f64], beta: &DVector<f64>, ridge: f64) -> f64 {
    let f = obs.nll(beta.as_slice(), weights);
    if ridge > 0.0 {
        f + 0.5 * ridge * beta.norm_squared()
    } else {
        f
    }
}

fn objective_gradient(
    obs: &Observations,
    weights: &[f64],
    beta: &DVector<f64>,
    ridge: f64,
) -> DVector<f64> {
    let g = obs.gradient(beta.as_slice(), weights);
    if ridge > 0.0 {
        g + beta * ridge
    } else {
        g
    }
}

/// Projected Newton with Armijo backtracking, solved in the coordinates of an
/// orthonormal basis `N` of the feasible subspace: the step solves
/// `(NᵀHN + ridge·I) s = −Nᵀg` and moves by `N s`.
pub(crate) fn newton(
    obs: &Observations,
    weights: &[f64],
    config: &FitConfig,
    start: &DVector<f64>,
) -> NewtonOutcome {
    let (m, d) = (obs.m, obs.d);
    let basis = feasible_basis(m, d);
    let q = basis.ncols();
    let ridge = config.ridge;

    let mut beta = start.clone();
    project_feasible(m, d, beta.as_mut_slice());
    let mut f = objective(obs, weights, &beta, ridge);
    let mut trace = vec![f];
    let mut g = objective_gradient(obs, weights, &beta, ridge);
    let mut g_red = basis.transpose() * &g;
    let mut g_norm = (&basis * &g_red).amax();
    let mut iterations = 0;
    let mut converged = g_norm <= config.gradient_tolerance;

    while !converged && iterations < config.max_iterations && f.is_finite() {
        iterations += 1;
        let h = obs.hessian(beta.as_slice(), weights);
        let mut h_red = basis.transpose() * h * &basis;
        for a in 0..q {
            h_red[(a, a)] += ridge;
        }
        let Some(step_red) = solve_damped(h_red, &g_red) else {
            break;
        };
        let step = &basis * &step_red;
        let slope = g_red.dot(&step_red);
        if !(slope < 0.0) {
            break;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = &beta + &step * t;
            let fc = objective(obs, weights, &cand, ridge);
            if fc.is_finite() && fc - f <= ARMIJO * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= config.line_search_shrink;
        }
        if accepted.is_none() {
            // Near the optimum the predicted decrease drops below the rounding
            // noise of the objective. Take the full step if the objective stays
            // within that noise and the projected gradient still shrinks.
            let cand = &beta + &step;
            let fc = objective(obs, weights, &cand, ridge);
            let noise = 1e-12 * f.abs().max(1.0);
            if fc.is_finite() && fc - f <= noise {
                let gc = objective_gradient(obs, weights, &cand, ridge);
                let gc_norm = (&basis * (basis.transpose() * &gc)).amax();
                if gc_norm < g_norm {
                    accepted = Some((cand, fc.min(f)));
                }
            }
        }
        let Some((mut cand, fc)) = accepted else {
            break;
        };
        project_feasible(m, d, cand.as_mut_slice());
        beta = cand;
        f = fc;
        trace.push(f);
        g = objective_gradient(obs, weights, &beta, ridge);
        g_red = basis.transpose() * &g;
        g_norm = (&basis * &g_red).amax();
        converged = g_norm <= config.gradient_tolerance;
    }

    NewtonOutcome {
        beta,
        objective: f,
        gradient_norm: g_norm,
        iterations,
        converged,
        trace,
    }
}

/// Solves `H s = −g` by Cholesky, adding diagonal damping if `H` is not
/// numerically positive definite.
fn solve_damped(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut damping = 0.0;
    for _ in 0..12 {
        let mut hd = h.clone();
        for a in 0..hd.nrows() {
            hd[(a, a)] += damping;
        }
        if let Some(chol) = hd.cholesky() {
            let s = chol.solve(&(-g));
            if s.iter().all(|v| v.is_finite()) {
                return Some(s);
            }
        }
        damping = if damping == 0.0 {
            1e-12 * scale
        } else {
            damping * 100.0
        };
    }
    None
}

fn start_vector(data_m: usize, data_d: usize, config: &FitConfig) -> Result<DVector<f64>> {
    match &config.initial_params {
        Some(p) => {
            if p.num_models() != data_m || p.covariate_dim() != data_d {
                return Err(Error::DimensionMismatch {
                    expected: crate::model::param_dim(data_m, data_d),
                    found: p.as_slice().len(),
                });
            }
            Ok(p.as_vector().clone())
        }
        None => Ok(DVector::zeros(crate::model::param_dim(data_m, data_d))),
    }
}

/// Fits on compiled observations with the given row weights. Connectivity
/// and rank are the caller's responsibility.
pub(crate) fn fit_weighted(
    obs: &Observations,
    weights: &[f64],
    config: &FitConfig,
    diagnostics: FitDiagnostics,
) -> Result<FitResult> {
    let start = start_vector(obs.m, obs.d, config)?;
    let outcome = newton(obs, weights, config, &start);
    if !outcome.objective.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    let final_nll = obs.nll(outcome.beta.as_slice(), weights);
    if !final_nll.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    let max_abs_margin = obs.max_abs_margin(outcome.beta.as_slice(), weights);
    let params = StackedParams::from_vector(obs.m, obs.d, outcome.beta)?;
    Ok(FitResult {
        params,
        final_nll,
        projected_gradient_norm: outcome.gradient_norm,
        iterations: outcome.iterations,
        converged: outcome.converged,
        diagnostics: FitDiagnostics {
            max_abs_margin,
            separation_warning: max_abs_margin > SEPARATION_MARGIN,
            ..diagnostics
        },
        objective_trace: outcome.trace,
    })
}

/// Constrained MLE of the contextual BTL model.
///
/// Fails on an empty or disconnected dataset, and on a rank-deficient design
/// unless `config.ridge > 0`. A fit that exhausts `max_iterations` is returned
/// with `converged == false`.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let components = check_connectivity(data);
    if components.len() > 1 {
        return Err(Error::DisconnectedGraph { components });
    }
    let obs = Observations::from_dataset(data);
    let rank = rank_report(&obs, &obs.counts);
    if !rank.design_full_rank && config.ridge == 0.0 {
        return Err(Error::RankDeficientDesign {
            rank: rank.design_rank,
            required: rank.design_required,
        });
    }
    let diagnostics = FitDiagnostics {
        components,
        rank,
        max_abs_margin: 0.0,
        separation_warning: false,
    };
    fit_weighted(&obs, &obs.counts, config, diagnostics)
}

/// `r_i = 1 + #{j : θ_j > θ_i}`; tied models share the better rank.
pub fn ranks_from_utilities(utilities: &[f64]) -> Vec<usize> {
    utilities
        .iter()
        .map(|&u| 1 + utilities.iter().filter(|&&v| v > u).count())
        .collect()
}

pub fn point_ranks(fit: &FitResult, x: &[f64]) -> Result<Vec<usize>> {
    Ok(ranks_from_utilities(&fit.params.utilities(x)?))
}
