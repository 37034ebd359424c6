//! Ranks and intervals in the limit x = λv, checked against large λ.

use rankuq::estimation::{fit, ranks_from_utilities, FitConfig};
use rankuq::model::StackedParams;
use rankuq::rank_sets::{extrapolate, RankScope};
use rankuq::simlab::{generate, CovariateSampler, Scenario};
use rankuq::uncertainty::{bootstrap_covariance_around, difference_cis, CiKind, PairSet};

fn main() -> rankuq::Result<()> {
    let truth = StackedParams::new(
        vec![0.3, 0.0, -0.3],
        vec![vec![-0.2, 0.5], vec![0.0, 0.1], vec![0.2, -0.6]],
    )?;
    let sampler = CovariateSampler::UniformBox {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    };
    let data = generate(&Scenario::uniform_pairs(truth, sampler, 5000, 2))?;
    let config = FitConfig::default();
    let base = fit(&data, &config)?;
    let sigma = bootstrap_covariance_around(&data, &base, &config, 200, 6)?;

    let v = [1.0, 1.0];
    let limit = extrapolate(
        &base.params,
        &sigma,
        &v,
        0.05,
        RankScope::Simultaneous,
        50_000,
        3,
    )?;
    println!("projections {:?}", limit.limiting_ranks.projections);
    println!("limiting ranks {:?}", limit.limiting_ranks.ranks);
    for (j, set) in limit.limiting_rank_sets.iter().enumerate() {
        println!("model {j}: [{},{}]", set.lo, set.hi);
    }

    let lambda = 1e8;
    let x: Vec<f64> = v.iter().map(|vk| lambda * vk).collect();
    println!(
        "point ranks at λ=1e8 {:?}",
        ranks_from_utilities(&base.params.utilities(&x)?)
    );
    let far = difference_cis(
        &base.params,
        &sigma,
        &PairSet::all(3, x),
        0.05,
        CiKind::Symm,
        50_000,
        3,
    )?;
    for (a, b) in far
        .intervals
        .iter()
        .zip(&limit.limiting_intervals.intervals)
    {
        println!(
            "({},{}) scaled [{:+.5}, {:+.5}] limit [{:+.5}, {:+.5}]",
            a.left,
            a.right,
            a.lo / lambda,
            a.hi / lambda,
            b.lo,
            b.hi
        );
    }
    Ok(())
}
