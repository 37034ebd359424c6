mod common;

use approx::assert_abs_diff_eq;

use rankuq::estimation::{
    check_connectivity, check_design_rank, fit, point_ranks, ranks_from_utilities, FitConfig,
};
use rankuq::model::{negative_log_likelihood, ComparisonRecord, Dataset, StackedParams};
use rankuq::simlab::{generate_replicate, grid_mle_oracle, CovariateSampler, Scenario};
use rankuq::Error;

use common::{random_dataset, random_params, rng};

fn two_model_wins(wins: usize, total: usize) -> Dataset {
    let records = (0..total)
        .map(|n| ComparisonRecord::new(0, 1, vec![], n < wins).unwrap())
        .collect();
    Dataset::anonymous(2, 0, records).unwrap()
}

#[test]
fn two_model_fit_is_the_logit_of_the_win_rate() {
    let result = fit(&two_model_wins(75, 100), &FitConfig::default()).unwrap();
    let half = 0.5 * 3f64.ln();
    assert!(result.converged);
    assert_abs_diff_eq!(result.params.intercepts()[0], -half, epsilon = 1e-6);
    assert_abs_diff_eq!(result.params.intercepts()[1], half, epsilon = 1e-6);
    for (wins, total) in [(3, 10), (41, 50), (500, 1000)] {
        let r = fit(&two_model_wins(wins, total), &FitConfig::default()).unwrap();
        let p = wins as f64 / total as f64;
        let diff = r.params.intercepts()[1] - r.params.intercepts()[0];
        assert_abs_diff_eq!(diff, (p / (1.0 - p)).ln(), epsilon = 1e-6);
    }
}

#[test]
fn balanced_outcomes_fit_to_zero() {
    let mut records = Vec::new();
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        for x in [-1.0, 0.5, 2.0] {
            records.push(ComparisonRecord::new(i, j, vec![x], true).unwrap());
            records.push(ComparisonRecord::new(i, j, vec![x], false).unwrap());
        }
    }
    let data = Dataset::anonymous(3, 1, records).unwrap();
    let r = fit(&data, &FitConfig::default()).unwrap();
    assert!(r.params.as_vector().amax() <= 1e-6);
}

#[test]
fn fits_are_normalized_stationary_and_monotone() {
    for seed in 0..8 {
        let mut r = rng(seed);
        let truth = random_params(&mut r, 4, 2, 0.7);
        let sampler = CovariateSampler::UniformBox {
            lo: vec![-1.0, 0.0],
            hi: vec![1.0, 2.0],
        };
        let data =
            generate_replicate(&Scenario::uniform_pairs(truth, sampler, 800, seed), 0).unwrap();
        let config = FitConfig::default();
        let result = fit(&data, &config).unwrap();
        assert!(result.converged);
        assert!(result.projected_gradient_norm <= config.gradient_tolerance);
        assert!(result.params.normalization_residual() <= 1e-10);
        assert!(result.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_abs_diff_eq!(result.objective_trace[0], 800.0 * 2f64.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(
            result.final_nll,
            negative_log_likelihood(&result.params, &data).unwrap(),
            epsilon = 1e-9
        );
    }
}

#[test]
fn relabeling_permutes_the_fit() {
    let mut r = rng(77);
    let data = random_dataset(&mut r, 5, 2, 400);
    let perm = [3, 0, 4, 1, 2];
    let base = fit(&data, &FitConfig::default()).unwrap();
    let moved = fit(&data.relabeled(&perm).unwrap(), &FitConfig::default()).unwrap();
    let expected = base.params.permuted(&perm).unwrap();
    assert!((moved.params.as_vector() - expected.as_vector()).amax() <= 1e-6);
}

#[test]
fn grid_oracle_never_beats_the_fit() {
    for seed in 0..10u64 {
        let mut r = rng(500 + seed);
        let (m, d) = [(2, 0), (2, 1), (3, 0), (4, 0)][seed as usize % 4];
        let l = 20 + (seed as usize * 7) % 41;
        let data = random_dataset(&mut r, m, d, l);
        let config = FitConfig {
            ridge: 0.0,
            ..FitConfig::default()
        };
        let Ok(result) = fit(&data, &config) else {
            continue;
        };
        let grid = grid_mle_oracle(&data, 0.05, 3.0).unwrap();
        let grid_nll = negative_log_likelihood(&grid, &data).unwrap();
        assert!(grid.is_normalized());
        assert!(result.final_nll <= grid_nll + 1e-3, "seed {seed}");
    }
}

#[test]
fn grid_oracle_examples() {
    let grid = grid_mle_oracle(&two_model_wins(75, 100), 0.01, 2.0).unwrap();
    let diff = grid.intercepts()[1] - grid.intercepts()[0];
    assert!((diff - 3f64.ln()).abs() <= 2.0 * 0.01);
    let grid = grid_mle_oracle(&two_model_wins(50, 100), 0.05, 1.0).unwrap();
    assert!(grid.as_vector().amax() <= 0.05);
}

#[test]
fn connectivity_and_rank_diagnostics() {
    let rec = |i, j, x: Vec<f64>| ComparisonRecord::new(i, j, x, true).unwrap();
    let path = Dataset::anonymous(3, 0, vec![rec(0, 1, vec![]), rec(1, 2, vec![])]).unwrap();
    assert_eq!(check_connectivity(&path), vec![vec![0, 1, 2]]);
    let split = Dataset::anonymous(3, 0, vec![rec(0, 1, vec![])]).unwrap();
    assert_eq!(check_connectivity(&split), vec![vec![0, 1], vec![2]]);
    let empty = Dataset::anonymous(2, 0, vec![]).unwrap();
    assert_eq!(check_connectivity(&empty), vec![vec![0], vec![1]]);

    let two = Dataset::anonymous(2, 1, vec![rec(0, 1, vec![1.0]), rec(0, 1, vec![2.0])]).unwrap();
    let report = check_design_rank(&two);
    assert_eq!(report.covariate_rank, 1);
    assert!(!report.full_rank);
    assert!(report.full_rank_constrained);
    let doubled = two.concat(&two).unwrap();
    assert_eq!(check_design_rank(&doubled), report);
    let zeros = Dataset::anonymous(2, 1, vec![rec(0, 1, vec![0.0]), rec(0, 1, vec![0.0])]).unwrap();
    assert_eq!(check_design_rank(&zeros).covariate_rank, 0);
}

#[test]
fn fit_rejects_unusable_data() {
    let rec = |i, j, x: Vec<f64>, y| ComparisonRecord::new(i, j, x, y).unwrap();
    let split = Dataset::anonymous(
        3,
        0,
        vec![rec(0, 1, vec![], true), rec(0, 1, vec![], false)],
    )
    .unwrap();
    assert!(matches!(
        fit(&split, &FitConfig::default()),
        Err(Error::DisconnectedGraph { .. })
    ));
    let flat = Dataset::anonymous(
        2,
        1,
        vec![rec(0, 1, vec![0.0], true), rec(0, 1, vec![0.0], false)],
    )
    .unwrap();
    assert!(matches!(
        fit(&flat, &FitConfig::default()),
        Err(Error::RankDeficientDesign { .. })
    ));
    let ridged = FitConfig {
        ridge: 1.0,
        ..FitConfig::default()
    };
    assert!(fit(&flat, &ridged).unwrap().converged);
    assert!(fit(
        &Dataset::anonymous(2, 0, vec![]).unwrap(),
        &FitConfig::default()
    )
    .is_err());
}

#[test]
fn point_rank_examples() {
    assert_eq!(ranks_from_utilities(&[0.1, 0.4]), vec![2, 1]);
    assert_eq!(ranks_from_utilities(&[0.2; 4]), vec![1; 4]);
    assert_eq!(ranks_from_utilities(&[0.3, 0.3, -1.0]), vec![1, 1, 3]);
    assert_eq!(
        ranks_from_utilities(&[0.9, 0.6, 0.2, -0.4, -1.3]),
        vec![1, 2, 3, 4, 5]
    );

    let result = fit(&two_model_wins(75, 100), &FitConfig::default()).unwrap();
    assert_eq!(point_ranks(&result, &[]).unwrap(), vec![2, 1]);
    assert!(point_ranks(&result, &[1.0]).is_err());
}

#[test]
fn estimates_concentrate_as_data_grow() {
    let truth = StackedParams::new(
        vec![-0.4, 0.1, 0.3],
        vec![vec![0.5], vec![-0.1], vec![-0.4]],
    )
    .unwrap();
    let sampler = CovariateSampler::UniformBox {
        lo: vec![-1.0],
        hi: vec![1.0],
    };
    let error = |l: usize| -> f64 {
        let scenario = Scenario::uniform_pairs(truth.clone(), sampler.clone(), l, 31);
        (0..20)
            .map(|rep| {
                let data = generate_replicate(&scenario, rep).unwrap();
                let r = fit(&data, &FitConfig::default()).unwrap();
                (r.params.as_vector() - truth.as_vector()).amax()
            })
            .sum::<f64>()
            / 20.0
    };
    let small = error(5_000);
    let large = error(50_000);
    assert!(large <= 0.5 * small, "{large} vs {small}");
}
