//! Load arena-style JSONL with category tags, fit, and print a rank table.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rankuq::estimation::{fit, FitConfig};
use rankuq::io::{load_comparisons, CovariateSpec, InputFormat, CATEGORY_PRESET};
use rankuq::rank_sets::simultaneous_rank_sets;
use rankuq::uncertainty::bootstrap_covariance_around;

fn main() -> rankuq::Result<()> {
    let models = ["atlas", "birch", "cedar", "dune"];
    let strength: [f64; 4] = [0.6, 0.2, -0.1, -0.7];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut file = tempfile::NamedTempFile::new()?;
    for _ in 0..3000 {
        let a = rng.random_range(0..4);
        let b = (a + rng.random_range(1..4)) % 4;
        let tags: Vec<&str> = CATEGORY_PRESET
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.3))
            .collect();
        let bonus = if tags.contains(&"Math") && b == 3 {
            1.2
        } else {
            0.0
        };
        let p_b = 1.0 / (1.0 + (strength[a] - strength[b] - bonus).exp());
        let winner = match rng.random::<f64>() {
            u if u < 0.08 => "tie",
            u if u < 0.1 => "tie_both_bad",
            u if u < 0.1 + 0.9 * p_b => "model_b",
            _ => "model_a",
        };
        let row = serde_json::json!({
            "model_a": models[a], "model_b": models[b], "winner": winner, "categories": tags,
        });
        writeln!(file, "{row}")?;
    }

    let (data, report) =
        load_comparisons(file.path(), InputFormat::Jsonl, &CovariateSpec::Categories)?;
    println!(
        "{} rows, {} ties dropped, {} models, d = {}",
        report.rows_read, report.dropped_ties, report.num_models, report.covariate_dim
    );
    let config = FitConfig::default();
    let base = fit(&data, &config)?;
    let sigma = bootstrap_covariance_around(&data, &base, &config, 200, 3)?;
    let math = rankuq::io::category_vector(&["Math"])?;
    let sets = simultaneous_rank_sets(&base.params, &sigma, &math, 0.05, 20_000, 1)?;
    let utilities = base.params.utilities(&math)?;
    let ranks = rankuq::estimation::ranks_from_utilities(&utilities);
    println!("Math prompts:");
    for (j, name) in data.model_names().iter().enumerate() {
        println!("  {name:<6} {} [{},{}]", ranks[j], sets[j].lo, sets[j].hi);
    }
    Ok(())
}
