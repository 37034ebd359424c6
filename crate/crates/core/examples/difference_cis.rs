//! Bootstrap covariance and simultaneous intervals for utility differences.

use rankuq::estimation::{fit, FitConfig};
use rankuq::model::StackedParams;
use rankuq::simlab::{generate, CovariateSampler, Scenario};
use rankuq::uncertainty::{bootstrap_covariance_around, difference_cis, CiKind, PairSet};

fn main() -> rankuq::Result<()> {
    let truth = StackedParams::new(vec![-0.5, 0.0, 0.5], vec![vec![0.4], vec![0.0], vec![-0.4]])?;
    let sampler = CovariateSampler::UniformBox {
        lo: vec![-1.0],
        hi: vec![1.0],
    };
    let data = generate(&Scenario::uniform_pairs(truth, sampler, 3000, 5))?;
    let config = FitConfig::default();
    let base = fit(&data, &config)?;
    let sigma = bootstrap_covariance_around(&data, &base, &config, 200, 17)?;
    println!(
        "bootstrap: {} replicates, {} dropped",
        sigma.replicates, sigma.dropped
    );

    let pairs = PairSet::all(3, vec![0.5]);
    for kind in CiKind::ALL {
        let set = difference_cis(&base.params, &sigma, &pairs, 0.05, kind, 50_000, 1)?;
        println!("{kind:?} critical values {:?}", set.critical);
        for iv in set.intervals.iter().filter(|iv| iv.left < iv.right) {
            println!(
                "  θ{} − θ{}: {:+.3} in [{:+.3}, {:+.3}]  {:?}",
                iv.right,
                iv.left,
                iv.estimate,
                iv.lo,
                iv.hi,
                iv.resolution()
            );
        }
    }
    Ok(())
}
