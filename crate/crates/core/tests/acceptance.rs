//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use rankuq::estimation::{fit, point_ranks, ranks_from_utilities, FitConfig};
use rankuq::io::{category_vector, read_comparisons, CovariateSpec, InputFormat};
use rankuq::model::{
    build_constraints, gradient, hessian, negative_log_likelihood, ComparisonRecord, Dataset,
    StackedParams,
};
use rankuq::rank_sets::{
    limiting_difference_cis, limiting_ranks, marginal_rank_sets, rank_sets_from_intervals,
    RankScope,
};
use rankuq::simlab::{
    exact_rankset_oracle, grid_mle_oracle, run_coverage, CovariateSampler, CoverageConfig,
    CoverageReport, Scenario,
};
use rankuq::uncertainty::{
    critical_value, difference_cis, CiKind, CovarianceEstimate, MaxKind, PairInterval, PairSet,
};

use common::{random_dataset, rankuq, rng, write_arena_jsonl};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(elapsed <= Duration::from_secs(limit_secs), || {
        format!("took {:.1}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

fn derivatives() -> Outcome {
    let start = Instant::now();
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let (p, data) = common::derivative_instance(seed);
        let g = gradient(&p, &data).unwrap();
        let fd = common::fd_gradient(&p, &data, 1e-5);
        worst_g = g
            .iter()
            .zip(&fd)
            .fold(worst_g, |w, (a, b)| w.max((a - b).abs()));
        let h = hessian(&p, &data).unwrap();
        worst_h = worst_h.max((h - common::fd_hessian(&p, &data, 1e-5)).amax());
    }
    ensure(worst_g <= 1e-6, || format!("gradient error {worst_g:.2e}"))?;
    ensure(worst_h <= 1e-5, || format!("Hessian error {worst_h:.2e}"))?;
    within(start.elapsed(), 10)?;
    Ok(format!(
        "20 instances, max gradient error {worst_g:.1e}, max Hessian error {worst_h:.1e}"
    ))
}

/// Neumaier-compensated trace, so the result is the correctly rounded sum of the diagonal.
fn trace(p: &DMatrix<f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in p.diagonal().iter() {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + carry
}

fn projection() -> Outcome {
    let mut worst = 0.0f64;
    for m in 2..=10 {
        for d in 0..=5 {
            let cs = build_constraints(m, d).unwrap();
            let p = &cs.projection;
            worst = worst
                .max((p * p - p).amax())
                .max((&cs.constraint * p).amax());
            let expected = ((m - 1) * (1 + d)) as f64;
            let tr = trace(p);
            ensure(tr == expected, || {
                format!("M={m} d={d}: trace {tr} vs {expected}")
            })?;
        }
    }
    ensure(worst <= 1e-12, || format!("entrywise error {worst:.2e}"))?;
    Ok(format!(
        "M in 2..=10, d in 0..=5, max entrywise error {worst:.1e}, traces exact"
    ))
}

fn closed_form() -> Outcome {
    let start = Instant::now();
    let records = (0..100)
        .map(|n| ComparisonRecord::new(0, 1, vec![], n < 75).unwrap())
        .collect();
    let data = Dataset::anonymous(2, 0, records).unwrap();
    let r = fit(&data, &FitConfig::default()).map_err(|e| e.to_string())?;
    let diff = r.params.intercepts()[1] - r.params.intercepts()[0];
    let err = (diff - 3f64.ln()).abs();
    ensure(err <= 1e-6, || format!("ln 3 error {err:.2e}"))?;

    let (mut checked, mut seed, mut worst) = (0, 0u64, f64::INFINITY);
    while checked < 10 {
        let mut r = rng(900 + seed);
        let (m, d) = [(2, 0), (2, 1), (3, 0), (2, 2), (4, 0)][seed as usize % 5];
        let data = random_dataset(&mut r, m, d, 30 + (seed as usize * 7) % 31);
        seed += 1;
        let Ok(result) = fit(&data, &FitConfig::default()) else {
            continue;
        };
        let grid = grid_mle_oracle(&data, 0.05, 3.0).unwrap();
        let gap = negative_log_likelihood(&grid, &data).unwrap() - result.final_nll;
        ensure(gap >= -1e-3, || format!("grid beats fit by {:.2e}", -gap))?;
        worst = worst.min(gap);
        checked += 1;
    }
    within(start.elapsed(), 30)?;
    Ok(format!(
        "ln 3 error {err:.1e}, 10 grid instances, min NLL gap {worst:.1e}"
    ))
}

fn critical_values() -> Outcome {
    let start = Instant::now();
    let sigma =
        CovarianceEstimate::from_matrix(DMatrix::from_row_slice(2, 2, &[0.25, -0.05, -0.05, 0.25]))
            .unwrap();
    let pair = PairSet::new(vec![(0, 1)], vec![], 2).unwrap();
    let symm = critical_value(&sigma, &pair, 2, 0.05, MaxKind::Symm, 200_000, 20)
        .map_err(|e| e.to_string())?;
    let lower = critical_value(&sigma, &pair, 2, 0.05, MaxKind::Lower, 200_000, 20)
        .map_err(|e| e.to_string())?;
    ensure((symm - 1.95996).abs() <= 0.02, || format!("symm {symm}"))?;
    ensure((lower - 1.64485).abs() <= 0.02, || format!("lower {lower}"))?;
    within(start.elapsed(), 10)?;
    Ok(format!("symm {symm:.4}, lower {lower:.4}"))
}

const COVERAGE_REPS: usize = 300;
const COVERAGE_DRAWS: usize = 20_000;

fn coverage_study() -> Result<(CoverageReport, Duration), String> {
    let start = Instant::now();
    let truth = StackedParams::new(
        vec![-0.4, 0.1, 0.3],
        vec![vec![0.5], vec![-0.1], vec![-0.4]],
    )
    .unwrap();
    let grid = (0..=20).map(|i| vec![-1.0 + 0.1 * i as f64]).collect();
    let scenario = Scenario::uniform_pairs(
        truth,
        CovariateSampler::FixedList { points: grid },
        5000,
        2024,
    );
    let config = CoverageConfig {
        bootstrap: 500,
        draws: COVERAGE_DRAWS,
        ..CoverageConfig::default()
    };
    let report =
        run_coverage(&scenario, COVERAGE_REPS, 0.05, &[0.5], &config).map_err(|e| e.to_string())?;
    Ok((report, start.elapsed()))
}

fn difference_coverage(study: &Result<(CoverageReport, Duration), String>) -> Outcome {
    let (report, elapsed) = study.as_ref().map_err(Clone::clone)?;
    ensure(report.successes == COVERAGE_REPS, || {
        format!("{} replications failed", report.failures)
    })?;
    let c = &report.difference_coverage;
    for (name, value) in [
        ("symm", c.symm),
        ("lower", c.lower),
        ("upper", c.upper),
        ("equiv", c.equiv),
    ] {
        ensure(value >= 0.93, || format!("{name} coverage {value:.3}"))?;
    }
    within(*elapsed, 15 * 60)?;
    Ok(format!(
        "{COVERAGE_REPS} reps, symm {:.3}, lower {:.3}, upper {:.3}, equiv {:.3}, {:.0}s",
        c.symm,
        c.lower,
        c.upper,
        c.equiv,
        elapsed.as_secs_f64()
    ))
}

fn rank_coverage(study: &Result<(CoverageReport, Duration), String>) -> Outcome {
    let (report, _) = study.as_ref().map_err(Clone::clone)?;
    for (m, &c) in report.marginal_coverage.iter().enumerate() {
        ensure(c >= 0.93, || format!("model {m} marginal coverage {c:.3}"))?;
    }
    ensure(report.simultaneous_coverage >= 0.93, || {
        format!("simultaneous coverage {:.3}", report.simultaneous_coverage)
    })?;
    Ok(format!(
        "marginal {:?}, simultaneous {:.3}",
        report
            .marginal_coverage
            .iter()
            .map(|c| format!("{c:.3}"))
            .collect::<Vec<_>>(),
        report.simultaneous_coverage
    ))
}

fn rank_set_structure() -> Outcome {
    let mut r = rng(7007);
    for case in 0..1000 {
        let m = r.random_range(2..=6);
        let (mut ivs, mut raw) = (Vec::new(), Vec::new());
        for i in 0..m {
            for j in i + 1..m {
                let (a, b) = if r.random_bool(0.5) { (i, j) } else { (j, i) };
                let centre = r.random_range(-2.0..2.0);
                let half = r.random_range(0.0..1.5);
                ivs.push(PairInterval {
                    left: a,
                    right: b,
                    estimate: centre,
                    se: 1.0,
                    lo: centre - half,
                    hi: centre + half,
                });
                raw.push((a, b, centre - half, centre + half));
            }
        }
        let sets = rank_sets_from_intervals(m, &ivs, 0.95, RankScope::Simultaneous)
            .map_err(|e| e.to_string())?;
        let oracle = exact_rankset_oracle(&raw, m).map_err(|e| e.to_string())?;
        let got: Vec<_> = sets.iter().map(|s| (s.lo, s.hi)).collect();
        ensure(got == oracle, || {
            format!("configuration {case}: {got:?} vs {oracle:?}")
        })?;
    }

    for seed in 0..100u64 {
        let m = 3 + (seed as usize % 4);
        let d = seed as usize % 3;
        let fitted = common::fitted_scenario(10_000 + seed, m, d, 1200, 60);
        let x: Vec<f64> = (0..d).map(|k| 0.5 - 0.3 * k as f64).collect();
        let params = &fitted.fit.params;
        let ranks = point_ranks(&fitted.fit, &x).unwrap();
        let symm = difference_cis(
            params,
            &fitted.sigma,
            &PairSet::all(m, x.clone()),
            0.05,
            CiKind::Symm,
            10_000,
            seed,
        )
        .map_err(|e| e.to_string())?;
        let sim =
            rank_sets_from_intervals(m, &symm.intervals, 0.95, RankScope::Simultaneous).unwrap();
        let marg = marginal_rank_sets(params, &fitted.sigma, &x, 0.05, 10_000, seed)
            .map_err(|e| e.to_string())?;
        for j in 0..m {
            ensure(sim[j].contains(ranks[j]), || {
                format!("scenario {seed}: point rank outside set")
            })?;
            ensure(sim[j].lo <= marg[j].lo && marg[j].hi <= sim[j].hi, || {
                format!("scenario {seed}: marginal set not nested")
            })?;
        }
    }
    Ok(
        "1000 configurations match the oracle; 100 fitted scenarios contain point ranks and nest"
            .into(),
    )
}

fn extrapolation() -> Outcome {
    let lambda = 1e8;
    let mut worst = 0.0f64;
    let (mut checked, mut seed) = (0, 0u64);
    while checked < 20 {
        let mut r = rng(20_000 + seed);
        let (m, d) = (r.random_range(3..=5), r.random_range(1..=3));
        let fitted = common::fitted_scenario(20_000 + seed, m, d, 1200, 60);
        seed += 1;
        let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let params = &fitted.fit.params;
        let limit = limiting_ranks(params, &v).unwrap();
        if !limit.all_distinct() {
            continue;
        }
        let far: Vec<f64> = v.iter().map(|c| c * lambda).collect();
        let ranks = ranks_from_utilities(&params.utilities(&far).unwrap());
        ensure(ranks == limit.ranks, || {
            format!("scenario {seed}: {ranks:?} vs {:?}", limit.ranks)
        })?;
        let finite = difference_cis(
            params,
            &fitted.sigma,
            &PairSet::all(m, far),
            0.05,
            CiKind::Symm,
            20_000,
            seed,
        )
        .map_err(|e| e.to_string())?;
        let lim = limiting_difference_cis(params, &fitted.sigma, &v, 0.05, 20_000, seed)
            .map_err(|e| e.to_string())?;
        for (a, b) in finite.intervals.iter().zip(&lim.intervals) {
            let half_b = 0.5 * (b.hi - b.lo);
            let rel = (0.5 * (a.hi - a.lo) / lambda - half_b).abs() / half_b;
            worst = worst.max(rel);
        }
        checked += 1;
    }
    ensure(worst <= 1e-4, || {
        format!("relative half-width error {worst:.2e}")
    })?;
    Ok(format!(
        "20 scenarios, ranks agree, max relative half-width error {worst:.1e}"
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("arena.jsonl");
    write_arena_jsonl(&input, 31, 1500);
    let input = input.to_str().unwrap();
    let models: Vec<String> = (0..2)
        .map(|k| {
            dir.path()
                .join(format!("model{k}.json"))
                .to_str()
                .unwrap()
                .to_owned()
        })
        .collect();
    let fits: Vec<_> = models
        .iter()
        .map(|m| {
            rankuq(&[
                "fit",
                input,
                "--covariates",
                "length,turns",
                "--bootstrap",
                "100",
                "--seed",
                "5",
                "-o",
                m,
            ])
        })
        .collect();
    ensure(fits.iter().all(|f| f.code == 0), || fits[0].stderr.clone())?;
    ensure(
        fits[0].stdout.replace(&models[0], "") == fits[1].stdout.replace(&models[1], ""),
        || "fit summaries differ".into(),
    )?;
    let bytes: Vec<Vec<u8>> = models.iter().map(|m| fs::read(m).unwrap()).collect();
    ensure(bytes[0] == bytes[1], || "model files differ".into())?;

    let scenario = dir.path().join("scenario.json");
    fs::write(
        &scenario,
        r#"{"true_params": {"intercepts": [0.3, -0.1, -0.2], "slopes": [[], [], []]},
            "pair_probabilities": [{"left": 0, "right": 1, "probability": 0.5}, {"left": 0, "right": 2, "probability": 0.5}],
            "covariate_sampler": {"kind": "fixed-list", "points": [[]]}, "num_records": 400, "seed": 9}"#,
    )
    .unwrap();
    let m = models[0].as_str();
    let commands: Vec<Vec<&str>> = vec![
        vec!["rank", "--model", m, "--x", "0.5,1"],
        vec![
            "rank-curve",
            "--model",
            m,
            "--direction",
            "1,-1",
            "--from",
            "-1",
            "--to",
            "1",
            "--steps",
            "4",
            "--format",
            "json",
        ],
        vec!["extrapolate", "--model", m, "--direction", "1,0.5"],
        vec![
            "coverage",
            "--scenario",
            scenario.to_str().unwrap(),
            "--reps",
            "50",
            "--bootstrap",
            "50",
            "--draws",
            "5000",
        ],
    ];
    for args in &commands {
        let a = rankuq(args);
        let b = rankuq(args);
        ensure(a.code == 0, || format!("{}: {}", args[0], a.stderr))?;
        ensure(
            serde_json::from_str::<serde_json::Value>(&a.stdout).is_ok(),
            || format!("{}: not JSON", args[0]),
        )?;
        ensure(a.stdout == b.stdout, || {
            format!("{} output differs between runs", args[0])
        })?;
    }
    Ok("fit, rank, rank-curve, extrapolate and coverage are byte-identical across runs".into())
}

fn ingestion() -> Outcome {
    let text = r#"{"model_a": "p", "model_b": "q", "winner": "model_b", "categories": ["Code"]}
{"model_a": "q", "model_b": "r", "winner": "tie", "categories": []}
{"model_a": "r", "model_b": "p", "winner": "tie (bothbad)", "categories": ["Math"]}
{"model_a": "p", "model_b": "r", "winner": "model_a", "categories": ["Domain Knowledge", "Specificity", "Technical Accuracy"]}
"#;
    let (data, report) = read_comparisons(
        Cursor::new(text),
        InputFormat::Jsonl,
        &CovariateSpec::Categories,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        report.dropped_ties == 2 && report.dropped_lines == [2, 3],
        || format!("{report:?}"),
    )?;
    ensure(data.len() == 2 && report.rows_read == 4, || {
        "wrong record count".into()
    })?;
    let expected = vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
    ensure(data.records()[1].covariates == expected, || {
        format!("{:?}", data.records()[1].covariates)
    })?;
    let direct = category_vector(&["Domain Knowledge", "Specificity", "Technical Accuracy"])
        .map_err(|e| e.to_string())?;
    ensure(direct == expected, || format!("{direct:?}"))?;
    Ok("2 of 4 rows dropped as ties; category example maps to (0,0,0,0,1,0,0,1,1,0)".into())
}

fn run(index: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    match &outcome {
        Ok(detail) => println!("PASS {index:>2} {name}: {detail}"),
        Err(why) => println!("FAIL {index:>2} {name}: {why}"),
    }
    outcome.is_ok()
}

fn main() {
    let study = coverage_study();
    let results = [
        run(1, "gradient and Hessian", derivatives),
        run(2, "projection algebra", projection),
        run(3, "closed-form and grid MLE", closed_form),
        run(4, "critical values", critical_values),
        run(5, "difference CI coverage", || difference_coverage(&study)),
        run(6, "rank set coverage", || rank_coverage(&study)),
        run(7, "rank set structure", rank_set_structure),
        run(8, "extrapolation limit", extrapolation),
        run(9, "CLI determinism", determinism),
        run(10, "ingestion", ingestion),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
