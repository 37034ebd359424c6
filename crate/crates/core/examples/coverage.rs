//! Monte Carlo coverage of difference intervals and rank sets.
//!
//! `cargo run --release --example coverage -- 300` runs the full study.

use rankuq::model::StackedParams;
use rankuq::simlab::{run_coverage, CovariateSampler, CoverageConfig, Scenario};

fn main() -> rankuq::Result<()> {
    let reps = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(60);
    let truth = StackedParams::new(
        vec![-0.4, 0.1, 0.3],
        vec![vec![0.5], vec![-0.1], vec![-0.4]],
    )?;
    let grid = (0..=20).map(|i| vec![-1.0 + 0.1 * i as f64]).collect();
    let scenario = Scenario::uniform_pairs(
        truth,
        CovariateSampler::FixedList { points: grid },
        5000,
        2024,
    );
    let config = CoverageConfig {
        bootstrap: 500,
        draws: 20_000,
        ..Default::default()
    };
    let report = run_coverage(&scenario, reps, 0.05, &[0.5], &config)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
