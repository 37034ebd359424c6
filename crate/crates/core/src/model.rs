//! Contextual Bradley-Terry-Luce model.
//!
//! Model `m` has utility `θ_m(x) = β_0m + xᵀβ_m` and the probability that the
//! right-hand model `j` of a comparison `(i, j)` wins is `σ(θ_j(x) − θ_i(x))`.
//!
//! Parameters are stacked as `(β_01, …, β_0M, β_1ᵀ, …, β_Mᵀ)`: all intercepts
//! first, then one contiguous slope row per model. Slope `k` of model `m` sits
//! at index `M + m·d + k`, which is the layout of `e_m ⊗ x` in the design
//! vector. Utilities are only identified up to a common shift, so fitted
//! parameters live on the subspace where intercepts and every slope column sum
//! to zero.

use std::collections::HashMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum-to-zero constraints.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Margins beyond this magnitude suggest separation in the data.
pub const SEPARATION_MARGIN: f64 = 30.0;

/// One pairwise comparison. `outcome == true` means the right model won.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub left: usize,
    pub right: usize,
    pub covariates: Vec<f64>,
    pub outcome: bool,
}

impl ComparisonRecord {
    pub fn new(left: usize, right: usize, covariates: Vec<f64>, outcome: bool) -> Result<Self> {
        if left == right {
            return Err(Error::SameModel(left));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariates must be finite".into()));
        }
        Ok(Self {
            left,
            right,
            covariates,
            outcome,
        })
    }
}

/// A validated collection of comparisons over `M` named models.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<ComparisonRecord>,
    num_models: usize,
    covariate_dim: usize,
    model_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        model_names: Vec<String>,
        covariate_dim: usize,
        records: Vec<ComparisonRecord>,
    ) -> Result<Self> {
        let num_models = model_names.len();
        if num_models < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least two models, got {num_models}"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &model_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate model name {name:?}"
                )));
            }
        }
        for r in &records {
            for index in [r.left, r.right] {
                if index >= num_models {
                    return Err(Error::IndexOutOfRange { index, num_models });
                }
            }
            if r.left == r.right {
                return Err(Error::SameModel(r.left));
            }
            if r.covariates.len() != covariate_dim {
                return Err(Error::DimensionMismatch {
                    expected: covariate_dim,
                    found: r.covariates.len(),
                });
            }
            if r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("covariates must be finite".into()));
            }
        }
        Ok(Self {
            records,
            num_models,
            covariate_dim,
            model_names,
        })
    }

    /// Dataset with generated names `model_0`, `model_1`, ….
    pub fn anonymous(
        num_models: usize,
        covariate_dim: usize,
        records: Vec<ComparisonRecord>,
    ) -> Result<Self> {
        let names = (0..num_models).map(|m| format!("model_{m}")).collect();
        Self::new(names, covariate_dim, records)
    }

    pub fn records(&self) -> &[ComparisonRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_dim
    }

    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    pub fn param_dim(&self) -> usize {
        param_dim(self.num_models, self.covariate_dim)
    }

    /// Same comparisons with model `m` renamed to `perm[m]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_models)?;
        let mut names = vec![String::new(); self.num_models];
        for (m, name) in self.model_names.iter().enumerate() {
            names[perm[m]] = name.clone();
        }
        let records = self
            .records
            .iter()
            .map(|r| ComparisonRecord {
                left: perm[r.left],
                right: perm[r.right],
                covariates: r.covariates.clone(),
                outcome: r.outcome,
            })
            .collect();
        Self::new(names, self.covariate_dim, records)
    }

    /// Concatenation of two datasets over the same models.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if other.model_names != self.model_names || other.covariate_dim != self.covariate_dim {
            return Err(Error::InvalidInput(
                "datasets describe different models".into(),
            ));
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Self::new(self.model_names.clone(), self.covariate_dim, records)
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: perm.len(),
        });
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidInput("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

pub fn param_dim(num_models: usize, covariate_dim: usize) -> usize {
    num_models * (1 + covariate_dim)
}

/// Dimension of the sum-to-zero subspace.
pub fn feasible_dim(num_models: usize, covariate_dim: usize) -> usize {
    (num_models - 1) * (1 + covariate_dim)
}

/// Intercepts and slopes of all models in the stacked layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct StackedParams {
    num_models: usize,
    dim: usize,
    values: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    intercepts: Vec<f64>,
    slopes: Vec<Vec<f64>>,
}

impl From<StackedParams> for ParamsRepr {
    fn from(p: StackedParams) -> Self {
        ParamsRepr {
            intercepts: p.intercepts().to_vec(),
            slopes: (0..p.num_models).map(|m| p.slope(m).to_vec()).collect(),
        }
    }
}

impl TryFrom<ParamsRepr> for StackedParams {
    type Error = Error;
    fn try_from(r: ParamsRepr) -> Result<Self> {
        StackedParams::from_parts(r.intercepts, r.slopes)
    }
}

impl StackedParams {
    pub fn zeros(num_models: usize, dim: usize) -> Self {
        Self {
            num_models,
            dim,
            values: DVector::zeros(param_dim(num_models, dim)),
        }
    }

    /// Parameters on the feasible subspace; errors if the normalization fails.
    pub fn new(intercepts: Vec<f64>, slopes: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self::from_parts(intercepts, slopes)?;
        let residual = p.normalization_residual();
        if residual > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { residual });
        }
        Ok(p)
    }

    /// Parameters without the normalization check. The likelihood is shift
    /// invariant, so unnormalized values are still meaningful inputs.
    pub fn from_parts(intercepts: Vec<f64>, slopes: Vec<Vec<f64>>) -> Result<Self> {
        let m = intercepts.len();
        if slopes.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: slopes.len(),
            });
        }
        let d = slopes.first().map_or(0, Vec::len);
        let mut values = intercepts;
        for row in slopes {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            values.extend(row);
        }
        Self::from_vector(m, d, DVector::from_vec(values))
    }

    pub fn from_vector(num_models: usize, dim: usize, values: DVector<f64>) -> Result<Self> {
        if values.len() != param_dim(num_models, dim) {
            return Err(Error::DimensionMismatch {
                expected: param_dim(num_models, dim),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(Self {
            num_models,
            dim,
            values,
        })
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn covariate_dim(&self) -> usize {
        self.dim
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.values.as_slice()[..self.num_models]
    }

    pub fn slope(&self, m: usize) -> &[f64] {
        let start = self.num_models + m * self.dim;
        &self.values.as_slice()[start..start + self.dim]
    }

    /// Largest absolute violation of the sum-to-zero constraints.
    pub fn normalization_residual(&self) -> f64 {
        let mut worst = self.intercepts().iter().sum::<f64>().abs();
        for k in 0..self.dim {
            let s: f64 = (0..self.num_models).map(|m| self.slope(m)[k]).sum();
            worst = worst.max(s.abs());
        }
        worst
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization_residual() <= NORMALIZATION_TOL
    }

    /// Orthogonal projection onto the feasible subspace.
    pub fn projected(&self) -> Self {
        let mut values = self.values.clone();
        project_feasible(self.num_models, self.dim, values.as_mut_slice());
        Self {
            num_models: self.num_models,
            dim: self.dim,
            values,
        }
    }

    /// Parameters with model `m` moved to position `perm[m]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_models)?;
        let mut out = Self::zeros(self.num_models, self.dim);
        let (m, d) = (self.num_models, self.dim);
        for (src, &dst) in perm.iter().enumerate() {
            out.values[dst] = self.values[src];
            for k in 0..d {
                out.values[m + dst * d + k] = self.values[m + src * d + k];
            }
        }
        Ok(out)
    }

    fn check_covariates(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.num_models {
            return Err(Error::IndexOutOfRange {
                index,
                num_models: self.num_models,
            });
        }
        Ok(())
    }

    /// `β_0m + xᵀβ_m`.
    pub fn utility(&self, m: usize, x: &[f64]) -> Result<f64> {
        self.check_index(m)?;
        self.check_covariates(x)?;
        Ok(self.utility_unchecked(m, x))
    }

    pub(crate) fn utility_unchecked(&self, m: usize, x: &[f64]) -> f64 {
        self.values[m] + dot(self.slope(m), x)
    }

    /// Utilities of every model at `x`.
    pub fn utilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_covariates(x)?;
        Ok((0..self.num_models)
            .map(|m| self.utility_unchecked(m, x))
            .collect())
    }

    /// `xᵀβ_m` for every model, i.e. utilities with intercepts dropped.
    pub fn slope_projections(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_covariates(v)?;
        Ok((0..self.num_models)
            .map(|m| dot(self.slope(m), v))
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Centers intercepts and each slope column in place.
pub(crate) fn project_feasible(m: usize, d: usize, values: &mut [f64]) {
    let mean = values[..m].iter().sum::<f64>() / m as f64;
    values[..m].iter_mut().for_each(|v| *v -= mean);
    for k in 0..d {
        let mean = (0..m).map(|i| values[m + i * d + k]).sum::<f64>() / m as f64;
        for i in 0..m {
            values[m + i * d + k] -= mean;
        }
    }
}

/// Dense design vector `(e_j, e_j ⊗ x) − (e_i, e_i ⊗ x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector(pub DVector<f64>);

impl DesignVector {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    /// Utility difference `θ_j(x) − θ_i(x)` under `params`.
    pub fn dot(&self, params: &StackedParams) -> f64 {
        self.0.dot(params.as_vector())
    }
}

pub fn build_design_vector(
    i: usize,
    j: usize,
    x: &[f64],
    num_models: usize,
    dim: usize,
) -> Result<DesignVector> {
    for index in [i, j] {
        if index >= num_models {
            return Err(Error::IndexOutOfRange { index, num_models });
        }
    }
    if i == j {
        return Err(Error::SameModel(i));
    }
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    let mut v = DVector::zeros(param_dim(num_models, dim));
    for (index, value) in design_entries(i, j, x, 1.0, num_models) {
        v[index] += value;
    }
    Ok(DesignVector(v))
}

/// Nonzero entries of the design vector for pair `(i, j)`, with the intercept
/// part scaled by `intercept_weight` (zero gives the slope-only contrast).
pub(crate) fn design_entries(
    i: usize,
    j: usize,
    x: &[f64],
    intercept_weight: f64,
    m: usize,
) -> impl Iterator<Item = (usize, f64)> + '_ {
    let d = x.len();
    [(i, -intercept_weight), (j, intercept_weight)]
        .into_iter()
        .chain(
            x.iter()
                .enumerate()
                .flat_map(move |(k, &xk)| [(m + i * d + k, -xk), (m + j * d + k, xk)]),
        )
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn preference_probability(
    params: &StackedParams,
    i: usize,
    j: usize,
    x: &[f64],
) -> Result<f64> {
    if i == j {
        return Err(Error::SameModel(i));
    }
    let diff = params.utility(j, x)? - params.utility(i, x)?;
    Ok(sigmoid(diff))
}

/// Comparisons compiled for likelihood evaluation: identical records are
/// merged into one weighted row, and covariates are stored contiguously.
#[derive(Debug, Clone)]
pub(crate) struct Observations {
    pub m: usize,
    pub d: usize,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    /// Number of records merged into each row.
    pub counts: Vec<f64>,
    /// Row index of every original record.
    pub record_row: Vec<usize>,
}

const CHUNK_ROWS: usize = 2048;
const CHUNK_BUDGET: usize = 1 << 24;

impl Observations {
    pub fn from_dataset(data: &Dataset) -> Self {
        let (m, d) = (data.num_models(), data.covariate_dim());
        let mut index: HashMap<(usize, usize, bool, Vec<u64>), usize> = HashMap::new();
        let mut obs = Observations {
            m,
            d,
            left: Vec::new(),
            right: Vec::new(),
            y: Vec::new(),
            x: Vec::new(),
            counts: Vec::new(),
            record_row: Vec::with_capacity(data.len()),
        };
        for r in data.records() {
            let key = (
                r.left,
                r.right,
                r.outcome,
                r.covariates.iter().map(|v| v.to_bits()).collect(),
            );
            let row = *index.entry(key).or_insert_with(|| {
                obs.left.push(r.left);
                obs.right.push(r.right);
                obs.y.push(if r.outcome { 1.0 } else { 0.0 });
                obs.x.extend_from_slice(&r.covariates);
                obs.counts.push(0.0);
                obs.left.len() - 1
            });
            obs.counts[row] += 1.0;
            obs.record_row.push(row);
        }
        obs
    }

    pub fn rows(&self) -> usize {
        self.left.len()
    }

    pub fn p(&self) -> usize {
        param_dim(self.m, self.d)
    }

    fn covariates(&self, row: usize) -> &[f64] {
        &self.x[row * self.d..(row + 1) * self.d]
    }

    fn entries(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        design_entries(
            self.left[row],
            self.right[row],
            self.covariates(row),
            1.0,
            self.m,
        )
    }

    /// Utility difference of the right minus the left model for one row.
    pub fn margin(&self, beta: &[f64], row: usize) -> f64 {
        let (m, d) = (self.m, self.d);
        let (i, j) = (self.left[row], self.right[row]);
        let x = self.covariates(row);
        let mut z = beta[j] - beta[i];
        for (k, xk) in x.iter().enumerate() {
            z += xk * (beta[m + j * d + k] - beta[m + i * d + k]);
        }
        z
    }

    fn chunk_len(&self, per_chunk_cost: usize) -> usize {
        let max_chunks = (CHUNK_BUDGET / per_chunk_cost.max(1)).max(1);
        CHUNK_ROWS.max(self.rows().div_ceil(max_chunks))
    }

    /// Evaluates `f` on fixed row chunks in parallel and returns the partial
    /// results in chunk order. Chunk boundaries depend only on the data, so
    /// reductions over the result are bit-stable for any thread count.
    fn chunked<T: Send>(
        &self,
        per_chunk_cost: usize,
        f: impl Fn(Range<usize>) -> T + Sync,
    ) -> Vec<T> {
        let n = self.rows();
        let len = self.chunk_len(per_chunk_cost);
        let chunks = n.div_ceil(len);
        if chunks <= 1 {
            return vec![f(0..n)];
        }
        (0..chunks)
            .into_par_iter()
            .map(|c| f(c * len..((c + 1) * len).min(n)))
            .collect()
    }

    pub fn nll(&self, beta: &[f64], weights: &[f64]) -> f64 {
        self.chunked(1, |range| {
            let mut s = 0.0;
            for row in range {
                let w = weights[row];
                if w == 0.0 {
                    continue;
                }
                let z = self.margin(beta, row);
                let y = self.y[row];
                s += w * (y * softplus(-z) + (1.0 - y) * softplus(z));
            }
            s
        })
        .into_iter()
        .sum()
    }

    pub fn gradient(&self, beta: &[f64], weights: &[f64]) -> DVector<f64> {
        let p = self.p();
        self.chunked(p, |range| {
            let mut g = DVector::zeros(p);
            for row in range {
                let w = weights[row];
                if w == 0.0 {
                    continue;
                }
                let r = -w * (self.y[row] - sigmoid(self.margin(beta, row)));
                for (idx, v) in self.entries(row) {
                    g[idx] += r * v;
                }
            }
            g
        })
        .into_iter()
        .fold(DVector::zeros(p), |acc, g| acc + g)
    }

    pub fn hessian(&self, beta: &[f64], weights: &[f64]) -> DMatrix<f64> {
        let p = self.p();
        let mut h = self
            .chunked(p * p, |range| {
                let mut h = DMatrix::zeros(p, p);
                let mut idx: Vec<(usize, f64)> = Vec::with_capacity(2 * (1 + self.d));
                for row in range {
                    let w = weights[row];
                    if w == 0.0 {
                        continue;
                    }
                    let s = sigmoid(self.margin(beta, row));
                    let c = w * s * (1.0 - s);
                    idx.clear();
                    idx.extend(self.entries(row));
                    for &(a, va) in &idx {
                        let ca = c * va;
                        for &(b, vb) in &idx {
                            if b >= a {
                                h[(a, b)] += ca * vb;
                            }
                        }
                    }
                }
                h
            })
            .into_iter()
            .fold(DMatrix::zeros(p, p), |acc, h| acc + h);
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        h
    }

    pub fn max_abs_margin(&self, beta: &[f64], weights: &[f64]) -> f64 {
        (0..self.rows())
            .filter(|&r| weights[r] > 0.0)
            .map(|r| self.margin(beta, r).abs())
            .fold(0.0, f64::max)
    }
}

fn check_params_for(params: &StackedParams, data: &Dataset) -> Result<()> {
    if params.num_models() != data.num_models() {
        return Err(Error::DimensionMismatch {
            expected: data.num_models(),
            found: params.num_models(),
        });
    }
    if params.covariate_dim() != data.covariate_dim() {
        return Err(Error::DimensionMismatch {
            expected: data.covariate_dim(),
            found: params.covariate_dim(),
        });
    }
    Ok(())
}

pub fn negative_log_likelihood(params: &StackedParams, data: &Dataset) -> Result<f64> {
    check_params_for(params, data)?;
    if data.is_empty() {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let obs = Observations::from_dataset(data);
    Ok(obs.nll(params.as_slice(), &obs.counts))
}

/// `Σ_l −(y_l − σ(β̃ᵀx̃_l)) x̃_l`.
pub fn gradient(params: &StackedParams, data: &Dataset) -> Result<DVector<f64>> {
    check_params_for(params, data)?;
    let obs = Observations::from_dataset(data);
    Ok(obs.gradient(params.as_slice(), &obs.counts))
}

/// `Σ_l σ(1 − σ) x̃_l x̃_lᵀ`; exactly symmetric.
pub fn hessian(params: &StackedParams, data: &Dataset) -> Result<DMatrix<f64>> {
    check_params_for(params, data)?;
    let obs = Observations::from_dataset(data);
    Ok(obs.hessian(params.as_slice(), &obs.counts))
}

/// Sum-to-zero constraints `Cβ̃ = 0` and the orthogonal projection onto
/// their null space.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub num_models: usize,
    pub covariate_dim: usize,
    /// `(1 + d) × (M + Md)`.
    pub constraint: DMatrix<f64>,
    /// `(M + Md) × (M + Md)`.
    pub projection: DMatrix<f64>,
}

/// Builds `C` and `P = I − Cᵀ(CCᵀ)⁻¹C`. Since `CCᵀ = M·I`, `P` is the block
/// centering matrix and is assembled directly.
pub fn build_constraints(num_models: usize, dim: usize) -> Result<ConstraintSystem> {
    if num_models < 2 {
        return Err(Error::InvalidInput("need at least two models".into()));
    }
    let (m, d) = (num_models, dim);
    let p = param_dim(m, d);
    let mut c = DMatrix::zeros(1 + d, p);
    for i in 0..m {
        c[(0, i)] = 1.0;
        for k in 0..d {
            c[(1 + k, m + i * d + k)] = 1.0;
        }
    }
    let inv_m = 1.0 / m as f64;
    let diag = (m - 1) as f64 / m as f64;
    let mut proj = DMatrix::zeros(p, p);
    for a in 0..m {
        for b in 0..m {
            let centering = if a == b { diag } else { -inv_m };
            proj[(a, b)] = centering;
            for k in 0..d {
                proj[(m + a * d + k, m + b * d + k)] = centering;
            }
        }
    }
    Ok(ConstraintSystem {
        num_models,
        covariate_dim: dim,
        constraint: c,
        projection: proj,
    })
}

/// Orthonormal basis of `1^⊥` in `R^M` (Helmert contrasts), `M × (M−1)`.
pub(crate) fn contrast_basis(m: usize) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(m, m - 1);
    for c in 0..m - 1 {
        let n = (c + 1) as f64;
        let scale = 1.0 / (n * (n + 1.0)).sqrt();
        for i in 0..=c {
            u[(i, c)] = scale;
        }
        u[(c + 1, c)] = -n * scale;
    }
    u
}

/// Orthonormal basis of the feasible subspace, `(M + Md) × (M−1)(1+d)`.
pub(crate) fn feasible_basis(m: usize, d: usize) -> DMatrix<f64> {
    let u = contrast_basis(m);
    let mut n = DMatrix::zeros(param_dim(m, d), feasible_dim(m, d));
    for i in 0..m {
        for c in 0..m - 1 {
            n[(i, c)] = u[(i, c)];
            for k in 0..d {
                n[(m + i * d + k, (m - 1) + c * d + k)] = u[(i, c)];
            }
        }
    }
    n
}
