//! Command-line workflows: `fit`, `rank`, `rank-curve`, `extrapolate`,
//! `coverage`.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | bad arguments or environment |
//! | 3 | unreadable or malformed input |
//! | 4 | data cannot support the model (disconnected, rank deficient, …) |
//! | 5 | numerical failure (non-convergence, bootstrap failure, …) |
//!
//! Failures print `{"error": {"kind", "message", "exit_code"}}` on stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::estimation::{fit, ranks_from_utilities, FitConfig};
use crate::io::{
    data_fingerprint, load_comparisons, CovariateSpec, FitSummary, IngestionReport, InputFormat,
    ModelFile,
};
use crate::rank_sets::{
    extrapolate, marginal_rank_sets, rank_curve, rank_sets_from_intervals, RankScope, RankSet,
};
use crate::simlab::{run_coverage, CoverageConfig, Scenario};
use crate::uncertainty::{
    bootstrap_covariance_around, difference_cis, CiKind, CovarianceEstimate, PairSet,
    DEFAULT_BOOTSTRAP, DEFAULT_DRAWS,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

pub const THREADS_ENV: &str = "RANKUQ_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "rankuq",
    version,
    about = "Covariate-dependent rankings with confidence sets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and bootstrap its covariance; writes a model file.
    Fit(FitArgs),
    /// Point ranks and rank sets at one covariate vector.
    Rank(RankArgs),
    /// Rank sets along a covariate path.
    RankCurve(RankCurveArgs),
    /// Limiting ranks and intervals as x = λv grows.
    Extrapolate(ExtrapolateArgs),
    /// Monte Carlo coverage for a synthetic scenario.
    Coverage(CoverageArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Marginal,
    Simultaneous,
}

impl From<ScopeArg> for RankScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Marginal => RankScope::Marginal,
            ScopeArg::Simultaneous => RankScope::Simultaneous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Debug, Args)]
pub struct Inference {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    pub draws: usize,
    /// Defaults to the seed stored in the model file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Write results here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Comparisons as JSONL or CSV.
    pub input: PathBuf,
    /// Defaults to the file extension.
    #[arg(long, value_enum)]
    pub input_format: Option<FormatArg>,
    /// Comma-separated covariate fields, or `categories` for the category preset.
    #[arg(long, default_value = "")]
    pub covariates: String,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Model file to write.
    #[arg(long, short = 'o')]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `zero`, `tags:A,B`, or a comma-separated vector.
    #[arg(long, default_value = "zero", allow_hyphen_values = true)]
    pub x: String,
    #[command(flatten)]
    pub inference: Inference,
}

#[derive(Debug, Args)]
pub struct RankCurveArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Explicit path points; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Vec<String>,
    /// Path `t·v` for `t` from `--from` to `--to`.
    #[arg(long, allow_hyphen_values = true)]
    pub direction: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub from: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub to: f64,
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
    #[arg(long, value_enum, default_value = "simultaneous")]
    pub scope: ScopeArg,
    #[command(flatten)]
    pub inference: Inference,
}

#[derive(Debug, Args)]
pub struct ExtrapolateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Direction v as a comma-separated vector or `tags:A,B`.
    #[arg(long, allow_hyphen_values = true)]
    pub direction: String,
    #[arg(long, value_enum, default_value = "simultaneous")]
    pub scope: ScopeArg,
    #[command(flatten)]
    pub inference: Inference,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub reps: usize,
    /// Evaluation covariate as a comma-separated vector, or `zero`.
    #[arg(long, default_value = "zero", allow_hyphen_values = true)]
    pub eval_x: String,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
    #[command(flatten)]
    pub inference: Inference,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            kind: "usage".into(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {"kind": self.kind, "message": self.message, "exit_code": self.code}
        })
        .to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::DisconnectedGraph { .. }
            | Error::RankDeficientDesign { .. }
            | Error::NotNormalized { .. }
            | Error::DimensionTooLarge { .. } => EXIT_DATA,
            Error::NonFiniteLikelihood
            | Error::NotConverged { .. }
            | Error::TooManyFailedReplicates { .. }
            | Error::NegativeVariance(_)
            | Error::DegeneratePair(..)
            | Error::FactorizationFailure => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses a covariate vector: `zero`/`intrinsic`, `tags:A,B` over `names`,
/// or comma-separated numbers. Returns the vector and its display label.
pub fn parse_covariate(text: &str, names: &[String]) -> crate::Result<(Vec<f64>, String)> {
    let d = names.len();
    let text = text.trim();
    let x = if text.is_empty() || text == "zero" || text == "intrinsic" {
        vec![0.0; d]
    } else if let Some(tags) = text.strip_prefix("tags:") {
        let mut x = vec![0.0; d];
        for tag in tags.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let k = names
                .iter()
                .position(|n| n.eq_ignore_ascii_case(tag))
                .ok_or_else(|| Error::InvalidInput(format!("unknown covariate tag {tag:?}")))?;
            x[k] = 1.0;
        }
        return Ok((x, text.to_owned()));
    } else {
        let x = text
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidInput(format!("bad covariate value {v:?}")))
            })
            .collect::<crate::Result<Vec<_>>>()?;
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        x
    };
    let label = if x.iter().all(|&v| v == 0.0) {
        "intrinsic".to_owned()
    } else {
        text.to_owned()
    };
    Ok((x, label))
}

/// `rank [lo,hi]` table cell.
pub fn rank_cell(rank: usize, set: &RankSet) -> String {
    format!("{rank} [{},{}]", set.lo, set.hi)
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

fn emit(output: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(Error::from)?,
        None => stdout.write_all(text.as_bytes()).map_err(Error::from)?,
    }
    Ok(())
}

fn unsupported(format: OutputFormat, command: &str) -> CliError {
    CliError::usage(format!("{command} does not support --format {format:?}").to_lowercase())
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage("--alpha must lie in (0, 1)"))
    }
}

fn load_model(path: &PathBuf) -> CliResult<(ModelFile, CovarianceEstimate)> {
    let model = ModelFile::load(path)?;
    let sigma = model.covariance.clone().ok_or_else(|| {
        CliError::from(Error::InvalidInput(
            "model file has no covariance; refit with --bootstrap > 0".into(),
        ))
    })?;
    Ok((model, sigma))
}

#[derive(Serialize)]
struct FitOutput<'a> {
    model_file: String,
    ingestion: &'a IngestionReport,
    fit: &'a FitSummary,
    bootstrap_replicates: usize,
    bootstrap_dropped: usize,
    seed: u64,
    data_fingerprint: &'a str,
}

fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let spec = match args.covariates.trim() {
        "categories" => CovariateSpec::Categories,
        s => CovariateSpec::Fields(
            s.split(',')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .map(str::to_owned)
                .collect(),
        ),
    };
    let format = match args.input_format {
        Some(FormatArg::Csv) => InputFormat::Csv,
        Some(FormatArg::Jsonl) => InputFormat::Jsonl,
        None => InputFormat::from_path(&args.input),
    };
    let (data, report) = load_comparisons(&args.input, format, &spec)?;
    eprintln!(
        "read {} rows: {} records, {} ties dropped, {} models",
        report.rows_read, report.num_records, report.dropped_ties, report.num_models
    );
    let config = FitConfig {
        max_iterations: args.max_iterations,
        gradient_tolerance: args.tolerance,
        ridge: args.ridge,
        ..FitConfig::default()
    };
    let result = fit(&data, &config)?;
    if !result.converged {
        return Err(Error::NotConverged {
            iterations: result.iterations,
            gradient_norm: result.projected_gradient_norm,
        }
        .into());
    }
    if result.diagnostics.separation_warning {
        eprintln!(
            "warning: max |margin| {:.1} suggests near-separation",
            result.diagnostics.max_abs_margin
        );
    }
    let covariance = if args.bootstrap > 0 {
        eprintln!("bootstrap: {} replicates", args.bootstrap);
        Some(bootstrap_covariance_around(
            &data,
            &result,
            &config,
            args.bootstrap,
            args.seed,
        )?)
    } else {
        None
    };
    let summary = FitSummary::from(&result);
    let model = ModelFile {
        model_names: data.model_names().to_vec(),
        covariate_names: spec.names(),
        params: result.params.clone(),
        covariance,
        fit: summary.clone(),
        seed: args.seed,
        data_fingerprint: data_fingerprint(&data),
    };
    model.save(&args.output)?;

    let out = FitOutput {
        model_file: args.output.display().to_string(),
        ingestion: &report,
        fit: &summary,
        bootstrap_replicates: model.covariance.as_ref().map_or(0, |c| c.replicates),
        bootstrap_dropped: model.covariance.as_ref().map_or(0, |c| c.dropped),
        seed: args.seed,
        data_fingerprint: &model.data_fingerprint,
    };
    let text = match args.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => to_json(&out)?,
        OutputFormat::Text => {
            let mut rows = vec![vec!["model".to_owned(), "intercept".to_owned()]];
            rows[0].extend(model.covariate_names.iter().cloned());
            for (m, name) in model.model_names.iter().enumerate() {
                let mut row = vec![name.clone(), format!("{:.4}", model.params.intercepts()[m])];
                row.extend(model.params.slope(m).iter().map(|v| format!("{v:.4}")));
                rows.push(row);
            }
            let mut t = aligned(&rows);
            let _ = writeln!(
                t,
                "nll {:.4}  iterations {}  converged {}",
                summary.final_nll, summary.iterations, summary.converged
            );
            t
        }
        f => return Err(unsupported(f, "fit")),
    };
    emit(&None, &text, stdout)
}

#[derive(Serialize)]
struct ModelRank {
    name: String,
    utility: f64,
    point_rank: usize,
    marginal: RankSet,
    simultaneous: RankSet,
}

#[derive(Serialize)]
struct RankOutput {
    label: String,
    x: Vec<f64>,
    level: f64,
    draws: usize,
    seed: u64,
    simultaneous_critical_value: Option<f64>,
    models: Vec<ModelRank>,
}

fn cmd_rank(args: &RankArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let inf = &args.inference;
    check_alpha(inf.alpha)?;
    let (model, sigma) = load_model(&args.model)?;
    let seed = inf.seed.unwrap_or(model.seed);
    let (x, label) = parse_covariate(&args.x, &model.covariate_names)?;
    let params = &model.params;
    let m = params.num_models();

    let all = PairSet::all(m, x.clone());
    let symm = difference_cis(
        params,
        &sigma,
        &all,
        inf.alpha,
        CiKind::Symm,
        inf.draws,
        seed,
    )?;
    let simultaneous =
        rank_sets_from_intervals(m, &symm.intervals, 1.0 - inf.alpha, RankScope::Simultaneous)?;
    let marginal = marginal_rank_sets(params, &sigma, &x, inf.alpha, inf.draws, seed)?;
    let utilities = params.utilities(&x)?;
    let point = ranks_from_utilities(&utilities);

    let mut models: Vec<ModelRank> = (0..m)
        .map(|j| ModelRank {
            name: model.model_names[j].clone(),
            utility: utilities[j],
            point_rank: point[j],
            marginal: marginal[j],
            simultaneous: simultaneous[j],
        })
        .collect();
    models.sort_by(|a, b| {
        a.point_rank
            .cmp(&b.point_rank)
            .then_with(|| a.name.cmp(&b.name))
    });
    let out = RankOutput {
        label,
        x,
        level: 1.0 - inf.alpha,
        draws: inf.draws,
        seed,
        simultaneous_critical_value: symm.critical.symm,
        models,
    };

    let text = match inf.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => to_json(&out)?,
        OutputFormat::Text => {
            let mut rows = vec![vec![
                "model".to_owned(),
                "utility".to_owned(),
                "marginal".to_owned(),
                "simultaneous".to_owned(),
            ]];
            for r in &out.models {
                rows.push(vec![
                    r.name.clone(),
                    format!("{:.4}", r.utility),
                    rank_cell(r.point_rank, &r.marginal),
                    rank_cell(r.point_rank, &r.simultaneous),
                ]);
            }
            format!("x: {}  level: {}\n{}", out.label, out.level, aligned(&rows))
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let _ = w.write_record([
                "label",
                "model",
                "utility",
                "point_rank",
                "marginal_lo",
                "marginal_hi",
                "simultaneous_lo",
                "simultaneous_hi",
            ]);
            for r in &out.models {
                let _ = w.write_record([
                    out.label.clone(),
                    r.name.clone(),
                    r.utility.to_string(),
                    r.point_rank.to_string(),
                    r.marginal.lo.to_string(),
                    r.marginal.hi.to_string(),
                    r.simultaneous.lo.to_string(),
                    r.simultaneous.hi.to_string(),
                ]);
            }
            csv_string(w)?
        }
    };
    emit(&inf.output, &text, stdout)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> CliResult<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::from(Error::InvalidInput(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct CurveModel {
    name: String,
    utility: f64,
    point_rank: usize,
    lo: usize,
    hi: usize,
}

#[derive(Serialize)]
struct CurvePoint {
    index: usize,
    t: Option<f64>,
    label: String,
    x: Vec<f64>,
    models: Vec<CurveModel>,
}

#[derive(Serialize)]
struct CurveOutput {
    scope: RankScope,
    level: f64,
    draws: usize,
    seed: u64,
    points: Vec<CurvePoint>,
}

fn cmd_rank_curve(args: &RankCurveArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let inf = &args.inference;
    check_alpha(inf.alpha)?;
    let (model, sigma) = load_model(&args.model)?;
    let seed = inf.seed.unwrap_or(model.seed);
    let names = &model.covariate_names;

    let mut path: Vec<(Option<f64>, String, Vec<f64>)> = Vec::new();
    for spec in &args.x {
        let (x, label) = parse_covariate(spec, names)?;
        path.push((None, label, x));
    }
    if let Some(dir) = &args.direction {
        let (v, _) = parse_covariate(dir, names)?;
        if args.steps == 0 {
            return Err(CliError::usage("--steps must be positive"));
        }
        for s in 0..args.steps {
            let t = if args.steps == 1 {
                args.from
            } else {
                args.from + (args.to - args.from) * s as f64 / (args.steps - 1) as f64
            };
            path.push((Some(t), format!("{t}"), v.iter().map(|vk| t * vk).collect()));
        }
    }
    if path.is_empty() {
        return Err(CliError::usage("give --x points or a --direction"));
    }
    let xs: Vec<Vec<f64>> = path.iter().map(|(_, _, x)| x.clone()).collect();
    let scope: RankScope = args.scope.into();
    let curve = rank_curve(
        &model.params,
        &sigma,
        &xs,
        inf.alpha,
        scope,
        inf.draws,
        seed,
    )?;
    let points: Vec<CurvePoint> = curve
        .into_iter()
        .zip(path)
        .enumerate()
        .map(|(index, (pt, (t, label, x)))| CurvePoint {
            index,
            t,
            label,
            x,
            models: (0..model.model_names.len())
                .map(|j| CurveModel {
                    name: model.model_names[j].clone(),
                    utility: pt.utilities[j],
                    point_rank: pt.point_ranks[j],
                    lo: pt.rank_sets[j].lo,
                    hi: pt.rank_sets[j].hi,
                })
                .collect(),
        })
        .collect();
    let out = CurveOutput {
        scope,
        level: 1.0 - inf.alpha,
        draws: inf.draws,
        seed,
        points,
    };

    let text = match inf.format.unwrap_or(OutputFormat::Csv) {
        OutputFormat::Json => to_json(&out)?,
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let _ = w.write_record([
                "index",
                "t",
                "label",
                "x",
                "model",
                "utility",
                "point_rank",
                "lo",
                "hi",
                "scope",
            ]);
            let scope_name = match scope {
                RankScope::Marginal => "marginal",
                RankScope::Simultaneous => "simultaneous",
            };
            for p in &out.points {
                let x = p.x.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
                for r in &p.models {
                    let _ = w.write_record([
                        p.index.to_string(),
                        p.t.map_or(String::new(), |t| t.to_string()),
                        p.label.clone(),
                        x.clone(),
                        r.name.clone(),
                        r.utility.to_string(),
                        r.point_rank.to_string(),
                        r.lo.to_string(),
                        r.hi.to_string(),
                        scope_name.to_owned(),
                    ]);
                }
            }
            csv_string(w)?
        }
        f => return Err(unsupported(f, "rank-curve")),
    };
    emit(&inf.output, &text, stdout)
}

#[derive(Serialize)]
struct ExtrapolateOutput {
    model_names: Vec<String>,
    seed: u64,
    draws: usize,
    #[serde(flatten)]
    result: crate::rank_sets::ExtrapolationResult,
}

fn cmd_extrapolate(args: &ExtrapolateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let inf = &args.inference;
    check_alpha(inf.alpha)?;
    let (model, sigma) = load_model(&args.model)?;
    let seed = inf.seed.unwrap_or(model.seed);
    let (v, _) = parse_covariate(&args.direction, &model.covariate_names)?;
    let result = extrapolate(
        &model.params,
        &sigma,
        &v,
        inf.alpha,
        args.scope.into(),
        inf.draws,
        seed,
    )?;
    let out = ExtrapolateOutput {
        model_names: model.model_names.clone(),
        seed,
        draws: inf.draws,
        result,
    };
    let text = match inf.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => to_json(&out)?,
        OutputFormat::Text => {
            let r = &out.result;
            let mut rows = vec![vec![
                "model".to_owned(),
                "projection".to_owned(),
                "limit".to_owned(),
            ]];
            for (j, name) in out.model_names.iter().enumerate() {
                rows.push(vec![
                    name.clone(),
                    format!("{:.4}", r.limiting_ranks.projections[j]),
                    rank_cell(r.limiting_ranks.ranks[j], &r.limiting_rank_sets[j]),
                ]);
            }
            let mut t = aligned(&rows);
            for &(i, j) in &r.limiting_ranks.tied_pairs {
                let _ = writeln!(t, "tied: {} and {}", out.model_names[i], out.model_names[j]);
            }
            t
        }
        f => return Err(unsupported(f, "extrapolate")),
    };
    emit(&inf.output, &text, stdout)
}

fn cmd_coverage(args: &CoverageArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let inf = &args.inference;
    check_alpha(inf.alpha)?;
    let text = std::fs::read_to_string(&args.scenario).map_err(Error::from)?;
    let scenario: Scenario = serde_json::from_str(&text).map_err(Error::from)?;
    let names: Vec<String> = (0..scenario.covariate_dim())
        .map(|k| format!("x{k}"))
        .collect();
    let (eval_x, _) = parse_covariate(&args.eval_x, &names)?;
    let config = CoverageConfig {
        bootstrap: args.bootstrap,
        draws: inf.draws,
        fit: FitConfig::default(),
    };
    eprintln!("coverage: {} replications", args.reps);
    let report = run_coverage(&scenario, args.reps, inf.alpha, &eval_x, &config)?;
    let text = match inf.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => to_json(&report)?,
        f => return Err(unsupported(f, "coverage")),
    };
    emit(&inf.output, &text, stdout)
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer")))?;
    // A pool may already exist when running in-process more than once.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, stdout),
        Command::Rank(a) => cmd_rank(a, stdout),
        Command::RankCurve(a) => cmd_rank_curve(a, stdout),
        Command::Extrapolate(a) => cmd_extrapolate(a, stdout),
        Command::Coverage(a) => cmd_coverage(a, stdout),
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("{}", CliError::usage(e.to_string().trim_end()).to_json());
            return EXIT_USAGE;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(&cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariate_parsing() {
        let names = vec!["a".to_owned(), "b".to_owned()];
        assert_eq!(
            parse_covariate("zero", &names).unwrap(),
            (vec![0.0, 0.0], "intrinsic".into())
        );
        assert_eq!(parse_covariate("0,0", &names).unwrap().1, "intrinsic");
        assert_eq!(parse_covariate("1, 2.5", &names).unwrap().0, vec![1.0, 2.5]);
        assert_eq!(parse_covariate("tags:B", &names).unwrap().0, vec![0.0, 1.0]);
        assert!(parse_covariate("1", &names).is_err());
        assert!(parse_covariate("tags:c", &names).is_err());
        assert!(parse_covariate("1,nan", &names).is_err());
    }

    #[test]
    fn cell_format() {
        let set = RankSet {
            model: 0,
            lo: 1,
            hi: 1,
            n_dominated: 4,
            n_dominating: 0,
            level: 0.95,
            scope: RankScope::Simultaneous,
        };
        assert_eq!(rank_cell(1, &set), "1 [1,1]");
    }

    #[test]
    fn exit_codes_by_error() {
        assert_eq!(
            CliError::from(Error::FactorizationFailure).code,
            EXIT_NUMERIC
        );
        assert_eq!(
            CliError::from(Error::DisconnectedGraph { components: vec![] }).code,
            EXIT_DATA
        );
        let e = CliError::from(Error::Parse {
            line: 3,
            message: "x".into(),
        });
        assert_eq!(e.code, EXIT_INPUT);
        let doc: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(doc["error"]["kind"], "parse_error");
    }
}
