#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rankuq::estimation::{fit, FitConfig, FitResult};
use rankuq::model::{ComparisonRecord, Dataset, StackedParams};
use rankuq::simlab::{generate, CovariateSampler, Scenario};
use rankuq::uncertainty::{bootstrap_covariance_around, CovarianceEstimate};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Normalized parameters with entries roughly in `[-scale, scale]`.
pub fn random_params(rng: &mut impl Rng, m: usize, d: usize, scale: f64) -> StackedParams {
    let intercepts: Vec<f64> = (0..m).map(|_| rng.random_range(-scale..scale)).collect();
    let slopes: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..d).map(|_| rng.random_range(-scale..scale)).collect())
        .collect();
    StackedParams::from_parts(intercepts, slopes)
        .unwrap()
        .projected()
}

/// Random records over a connected graph: a chain first, then random pairs.
pub fn random_dataset(rng: &mut impl Rng, m: usize, d: usize, l: usize) -> Dataset {
    let records = (0..l)
        .map(|n| {
            let (i, j) = if n + 1 < m {
                (n, n + 1)
            } else {
                let i = rng.random_range(0..m);
                (i, (i + rng.random_range(1..m)) % m)
            };
            let x = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            ComparisonRecord::new(i, j, x, rng.random_bool(0.5)).unwrap()
        })
        .collect();
    Dataset::anonymous(m, d, records).unwrap()
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-record summation straight from the definition.
pub fn naive_nll(params: &StackedParams, data: &Dataset) -> f64 {
    data.records()
        .iter()
        .map(|r| {
            let z = params.utility(r.right, &r.covariates).unwrap()
                - params.utility(r.left, &r.covariates).unwrap();
            let p = logistic(z);
            if r.outcome {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

/// Data from a known model, its fit, and a bootstrap covariance.
pub struct Fitted {
    pub truth: StackedParams,
    pub data: Dataset,
    pub fit: FitResult,
    pub sigma: CovarianceEstimate,
}

pub fn fitted_scenario(seed: u64, m: usize, d: usize, l: usize, b: usize) -> Fitted {
    let mut r = rng(seed);
    let truth = random_params(&mut r, m, d, 0.8);
    let sampler = CovariateSampler::UniformBox {
        lo: vec![-1.0; d],
        hi: vec![1.0; d],
    };
    let data = generate(&Scenario::uniform_pairs(truth.clone(), sampler, l, seed)).unwrap();
    let config = FitConfig::default();
    let fit = fit(&data, &config).unwrap();
    let sigma = bootstrap_covariance_around(&data, &fit, &config, b, seed ^ 0x5eed).unwrap();
    Fitted {
        truth,
        data,
        fit,
        sigma,
    }
}

fn perturbed(params: &StackedParams, a: usize, h: f64) -> StackedParams {
    let mut v = params.as_vector().clone();
    v[a] += h;
    StackedParams::from_vector(params.num_models(), params.covariate_dim(), v).unwrap()
}

/// Central differences of the negative log-likelihood.
pub fn fd_gradient(params: &StackedParams, data: &Dataset, h: f64) -> Vec<f64> {
    (0..params.as_slice().len())
        .map(|a| {
            let up = naive_nll(&perturbed(params, a, h), data);
            let down = naive_nll(&perturbed(params, a, -h), data);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central differences of the analytic gradient, column by column.
pub fn fd_hessian(params: &StackedParams, data: &Dataset, h: f64) -> nalgebra::DMatrix<f64> {
    let p = params.as_slice().len();
    let mut out = nalgebra::DMatrix::zeros(p, p);
    for a in 0..p {
        let up = rankuq::model::gradient(&perturbed(params, a, h), data).unwrap();
        let down = rankuq::model::gradient(&perturbed(params, a, -h), data).unwrap();
        out.set_column(a, &((up - down) / (2.0 * h)));
    }
    out
}

/// Random derivative-check instance: `M ≤ 5`, `d ≤ 3`, `L ≤ 100`.
pub fn derivative_instance(seed: u64) -> (StackedParams, Dataset) {
    let mut r = rng(seed);
    let m = r.random_range(2..=5);
    let d = r.random_range(0..=3);
    let l = r.random_range(m..=100);
    let data = random_dataset(&mut r, m, d, l);
    (random_params(&mut r, m, d, 1.0), data)
}

pub const ARENA_MODELS: [&str; 4] = ["atlas", "borealis", "cinder", "dune"];

/// Arena-style JSONL with two numeric covariates and a few ties, written to `path`.
pub fn write_arena_jsonl(path: &std::path::Path, seed: u64, l: usize) {
    use std::fmt::Write;
    let truth = StackedParams::new(
        vec![0.6, 0.1, -0.2, -0.5],
        vec![
            vec![0.3, -0.2],
            vec![-0.4, 0.1],
            vec![0.5, 0.3],
            vec![-0.4, -0.2],
        ],
    )
    .unwrap();
    let points = (0..3)
        .flat_map(|a| (0..3).map(move |b| vec![a as f64 - 1.0, 0.5 * b as f64]))
        .collect();
    let scenario = Scenario::uniform_pairs(truth, CovariateSampler::FixedList { points }, l, seed);
    let data = generate(&scenario).unwrap();
    let mut text = String::new();
    for (n, r) in data.records().iter().enumerate() {
        let winner = if n % 17 == 5 {
            "tie"
        } else if r.outcome {
            "model_b"
        } else {
            "model_a"
        };
        let _ = writeln!(
            text,
            "{}",
            serde_json::json!({
                "model_a": ARENA_MODELS[r.left],
                "model_b": ARENA_MODELS[r.right],
                "winner": winner,
                "covariates": {"length": r.covariates[0], "turns": r.covariates[1]},
            })
        );
    }
    std::fs::write(path, text).unwrap();
}

pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn rankuq(args: &[&str]) -> CliOutput {
    rankuq_with_env(args, &[])
}

pub fn rankuq_with_env(args: &[&str], env: &[(&str, &str)]) -> CliOutput {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_rankuq"))
        .args(args)
        .envs(env.iter().copied())
        .output()
        .unwrap();
    CliOutput {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}
