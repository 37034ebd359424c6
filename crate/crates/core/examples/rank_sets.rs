//! Marginal and simultaneous rank confidence sets at a few covariates.

use rankuq::estimation::{fit, ranks_from_utilities, FitConfig};
use rankuq::model::StackedParams;
use rankuq::rank_sets::{marginal_rank_sets, simultaneous_rank_sets};
use rankuq::simlab::{generate, CovariateSampler, Scenario};
use rankuq::uncertainty::bootstrap_covariance_around;

fn main() -> rankuq::Result<()> {
    let truth = StackedParams::new(
        vec![-0.9, -0.3, 0.0, 0.4, 0.8],
        vec![vec![0.9], vec![0.4], vec![0.0], vec![-0.5], vec![-0.8]],
    )?;
    let sampler = CovariateSampler::Bernoulli {
        probabilities: vec![0.5],
    };
    let data = generate(&Scenario::uniform_pairs(truth, sampler, 6000, 3))?;
    let config = FitConfig::default();
    let base = fit(&data, &config)?;
    let sigma = bootstrap_covariance_around(&data, &base, &config, 300, 8)?;

    for x in [[0.0], [1.0]] {
        let point = ranks_from_utilities(&base.params.utilities(&x)?);
        let marginal = marginal_rank_sets(&base.params, &sigma, &x, 0.05, 50_000, 2)?;
        let joint = simultaneous_rank_sets(&base.params, &sigma, &x, 0.05, 50_000, 2)?;
        println!("x = {x:?}");
        println!("  model  marginal   simultaneous");
        for j in 0..point.len() {
            println!(
                "  {j:<5}  {} [{},{}]    {} [{},{}]",
                point[j], marginal[j].lo, marginal[j].hi, point[j], joint[j].lo, joint[j].hi
            );
        }
    }
    Ok(())
}
