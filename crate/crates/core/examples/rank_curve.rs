//! Rank sets along a covariate path, printed as CSV for a bump chart.

use rankuq::estimation::{fit, FitConfig};
use rankuq::model::StackedParams;
use rankuq::rank_sets::{rank_curve, RankScope};
use rankuq::simlab::{generate, CovariateSampler, Scenario};
use rankuq::uncertainty::bootstrap_covariance_around;

fn main() -> rankuq::Result<()> {
    let truth = StackedParams::new(vec![0.6, 0.0, -0.6], vec![vec![-0.5], vec![0.1], vec![0.4]])?;
    let sampler = CovariateSampler::UniformBox {
        lo: vec![0.0],
        hi: vec![4.0],
    };
    let data = generate(&Scenario::uniform_pairs(truth, sampler, 5000, 21))?;
    let config = FitConfig::default();
    let base = fit(&data, &config)?;
    let sigma = bootstrap_covariance_around(&data, &base, &config, 200, 4)?;

    let path: Vec<Vec<f64>> = (0..=8).map(|i| vec![i as f64 * 0.5]).collect();
    let curve = rank_curve(
        &base.params,
        &sigma,
        &path,
        0.05,
        RankScope::Simultaneous,
        20_000,
        9,
    )?;
    println!("x,model,utility,point_rank,lo,hi");
    for point in &curve {
        for (j, set) in point.rank_sets.iter().enumerate() {
            println!(
                "{},{j},{:.4},{},{},{}",
                point.x[0], point.utilities[j], point.point_ranks[j], set.lo, set.hi
            );
        }
    }
    Ok(())
}
