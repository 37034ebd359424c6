//! Fit a contextual model to simulated comparisons and compare with the truth.

use rankuq::estimation::{fit, point_ranks, FitConfig};
use rankuq::model::StackedParams;
use rankuq::simlab::{generate, CovariateSampler, Scenario};

fn main() -> rankuq::Result<()> {
    let truth = StackedParams::new(
        vec![-0.6, 0.1, 0.5],
        vec![vec![0.8, 0.0], vec![0.0, 0.3], vec![-0.8, -0.3]],
    )?;
    let sampler = CovariateSampler::Bernoulli {
        probabilities: vec![0.4, 0.5],
    };
    let scenario = Scenario::uniform_pairs(truth.clone(), sampler, 4000, 11);
    let data = generate(&scenario)?;

    let result = fit(&data, &FitConfig::default())?;
    println!(
        "converged={} iterations={} nll={:.3} |Pg|={:.2e}",
        result.converged, result.iterations, result.final_nll, result.projected_gradient_norm
    );
    for m in 0..truth.num_models() {
        println!(
            "model {m}: intercept {:+.3} (true {:+.3})  slopes {:?} (true {:?})",
            result.params.intercepts()[m],
            truth.intercepts()[m],
            result
                .params
                .slope(m)
                .iter()
                .map(|v| (v * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            truth.slope(m),
        );
    }
    for x in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]] {
        println!("ranks at {x:?}: {:?}", point_ranks(&result, &x)?);
    }
    Ok(())
}
