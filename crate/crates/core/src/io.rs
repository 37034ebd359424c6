//! Ingestion of arena-style preference dumps and the persisted model file.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimation::{FitDiagnostics, FitResult};
use crate::model::{ComparisonRecord, Dataset, StackedParams};
use crate::uncertainty::{CovarianceEstimate, CovarianceMethod};

pub const SCHEMA_VERSION: u32 = 1;

/// Prompt categories in preset order.
pub const CATEGORY_PRESET: [&str; 10] = [
    "Code",
    "Creative Writing",
    "Complexity",
    "Creativity",
    "Domain Knowledge",
    "Problem Solving",
    "Real World",
    "Specificity",
    "Technical Accuracy",
    "Math",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    /// Guesses the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Jsonl,
        }
    }
}

/// How covariate vectors are read from each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateSpec {
    /// Named numeric fields, in vector order.
    Fields(Vec<String>),
    /// 0/1 indicators over [`CATEGORY_PRESET`] read from a `categories` list.
    Categories,
}

impl CovariateSpec {
    pub fn names(&self) -> Vec<String> {
        match self {
            CovariateSpec::Fields(names) => names.clone(),
            CovariateSpec::Categories => CATEGORY_PRESET.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovariateSpec::Fields(names) => names.len(),
            CovariateSpec::Categories => CATEGORY_PRESET.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    ModelA,
    ModelB,
    Tie,
    TieBothBad,
}

impl Winner {
    pub fn parse(tag: &str) -> Option<Self> {
        match tag.trim() {
            "model_a" => Some(Winner::ModelA),
            "model_b" => Some(Winner::ModelB),
            "tie" => Some(Winner::Tie),
            "tie_both_bad" | "tie (bothbad)" => Some(Winner::TieBothBad),
            _ => None,
        }
    }

    pub fn is_tie(self) -> bool {
        matches!(self, Winner::Tie | Winner::TieBothBad)
    }
}

/// One input row before interning.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPreferenceRow {
    pub line: usize,
    pub model_a: String,
    pub model_b: String,
    pub winner: Winner,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub rows_read: usize,
    pub dropped_ties: usize,
    /// Line numbers of the dropped tie rows.
    pub dropped_lines: Vec<usize>,
    pub num_models: usize,
    pub covariate_dim: usize,
    pub num_records: usize,
    pub model_names: Vec<String>,
    pub covariate_names: Vec<String>,
}

/// Indicator vector over [`CATEGORY_PRESET`] for a set of tags.
pub fn category_vector<S: AsRef<str>>(tags: &[S]) -> Result<Vec<f64>> {
    let mut x = vec![0.0; CATEGORY_PRESET.len()];
    for tag in tags {
        let tag = tag.as_ref().trim();
        let k = CATEGORY_PRESET
            .iter()
            .position(|c| c.eq_ignore_ascii_case(tag))
            .ok_or_else(|| Error::InvalidInput(format!("unknown category {tag:?}")))?;
        x[k] = 1.0;
    }
    Ok(x)
}

fn category_row(tags: &[String], line: usize) -> Result<Vec<f64>> {
    category_vector(tags).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })
}

fn json_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
        _ => None,
    }
}

fn parse_json_row(text: &str, line: usize, spec: &CovariateSpec) -> Result<RawPreferenceRow> {
    let parse = |message: String| Error::Parse { line, message };
    let value: Value = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse("expected a JSON object".into()))?;
    let field = |key: &str| -> Result<String> {
        obj.get(key)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| parse(format!("missing string field {key:?}")))
    };
    let model_a = field("model_a")?;
    let model_b = field("model_b")?;
    let tag = field("winner")?;
    let winner = Winner::parse(&tag).ok_or(Error::UnknownWinnerTag { line, tag })?;
    let covariates = match spec {
        CovariateSpec::Fields(names) => {
            let cov = obj.get("covariates").and_then(Value::as_object);
            names
                .iter()
                .map(|name| {
                    let v =
                        cov.and_then(|c| c.get(name))
                            .ok_or_else(|| Error::MissingCovariate {
                                field: name.clone(),
                                line,
                            })?;
                    json_number(v)
                        .ok_or_else(|| parse(format!("covariate {name:?} is not numeric")))
                })
                .collect::<Result<Vec<_>>>()?
        }
        CovariateSpec::Categories => {
            let list = obj
                .get("categories")
                .or_else(|| obj.get("covariates").and_then(|c| c.get("categories")))
                .ok_or_else(|| Error::MissingCovariate {
                    field: "categories".into(),
                    line,
                })?;
            let tags = list
                .as_array()
                .ok_or_else(|| parse("categories must be an array".into()))?
                .iter()
                .map(|t| t.as_str().map(str::to_owned))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| parse("categories must be strings".into()))?;
            category_row(&tags, line)?
        }
    };
    Ok(RawPreferenceRow {
        line,
        model_a,
        model_b,
        winner,
        covariates,
    })
}

fn read_jsonl(reader: impl Read, spec: &CovariateSpec) -> Result<Vec<RawPreferenceRow>> {
    let mut rows = Vec::new();
    for (idx, text) in BufReader::new(reader).lines().enumerate() {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        rows.push(parse_json_row(&text, idx + 1, spec)?);
    }
    Ok(rows)
}

fn read_csv(reader: impl Read, spec: &CovariateSpec) -> Result<Vec<RawPreferenceRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str, line: usize| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse {
                line,
                message: format!("missing column {name:?}"),
            })
    };
    let (ca, cb, cw) = (
        column("model_a", 1)?,
        column("model_b", 1)?,
        column("winner", 1)?,
    );
    let cov_columns: Vec<(String, Option<usize>)> = match spec {
        CovariateSpec::Fields(names) => names
            .iter()
            .map(|n| (n.clone(), headers.iter().position(|h| h.trim() == n)))
            .collect(),
        CovariateSpec::Categories => vec![(
            "categories".into(),
            headers.iter().position(|h| h.trim() == "categories"),
        )],
    };

    let mut rows = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cell = |c: usize| record.get(c).unwrap_or("").trim().to_owned();
        let tag = cell(cw);
        let winner = Winner::parse(&tag).ok_or(Error::UnknownWinnerTag { line, tag })?;
        let mut cells = Vec::with_capacity(cov_columns.len());
        for (name, col) in &cov_columns {
            let value = col
                .map(cell)
                .filter(|v| !v.is_empty() || *spec == CovariateSpec::Categories);
            cells.push(value.ok_or_else(|| Error::MissingCovariate {
                field: name.clone(),
                line,
            })?);
        }
        let covariates = match spec {
            CovariateSpec::Fields(names) => cells
                .iter()
                .zip(names)
                .map(|(v, name)| {
                    v.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("covariate {name:?} is not numeric: {v:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            CovariateSpec::Categories => {
                let tags: Vec<String> = cells[0]
                    .split(';')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(str::to_owned)
                    .collect();
                category_row(&tags, line)?
            }
        };
        rows.push(RawPreferenceRow {
            line,
            model_a: cell(ca),
            model_b: cell(cb),
            winner,
            covariates,
        });
    }
    Ok(rows)
}

/// Interns model names in order of first appearance, drops ties, and builds
/// records with `left = model_a`, `right = model_b`, outcome true iff
/// `model_b` won.
pub fn build_dataset(
    rows: Vec<RawPreferenceRow>,
    spec: &CovariateSpec,
) -> Result<(Dataset, IngestionReport)> {
    let rows_read = rows.len();
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |name: &str| -> usize {
        if let Some(&i) = index.get(name) {
            return i;
        }
        names.push(name.to_owned());
        index.insert(name.to_owned(), names.len() - 1);
        names.len() - 1
    };
    let mut records = Vec::with_capacity(rows.len());
    let mut dropped_lines = Vec::new();
    for row in rows {
        let a = intern(&row.model_a);
        let b = intern(&row.model_b);
        if row.winner.is_tie() {
            dropped_lines.push(row.line);
            continue;
        }
        if a == b {
            return Err(Error::Parse {
                line: row.line,
                message: format!("model {:?} compared with itself", row.model_a),
            });
        }
        if row.covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: row.line,
                message: "covariates must be finite".into(),
            });
        }
        records.push(ComparisonRecord::new(
            a,
            b,
            row.covariates,
            row.winner == Winner::ModelB,
        )?);
    }
    let d = spec.dim();
    let report = IngestionReport {
        rows_read,
        dropped_ties: dropped_lines.len(),
        dropped_lines,
        num_models: names.len(),
        covariate_dim: d,
        num_records: records.len(),
        model_names: names.clone(),
        covariate_names: spec.names(),
    };
    Ok((Dataset::new(names, d, records)?, report))
}

pub fn read_comparisons(
    reader: impl Read,
    format: InputFormat,
    spec: &CovariateSpec,
) -> Result<(Dataset, IngestionReport)> {
    let rows = match format {
        InputFormat::Jsonl => read_jsonl(reader, spec)?,
        InputFormat::Csv => read_csv(reader, spec)?,
    };
    build_dataset(rows, spec)
}

pub fn load_comparisons(
    path: impl AsRef<Path>,
    format: InputFormat,
    spec: &CovariateSpec,
) -> Result<(Dataset, IngestionReport)> {
    read_comparisons(File::open(path)?, format, spec)
}

/// SHA-256 over model names and records, hex encoded.
pub fn data_fingerprint(data: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((data.num_models() as u64).to_le_bytes());
    h.update((data.covariate_dim() as u64).to_le_bytes());
    for name in data.model_names() {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
    }
    for r in data.records() {
        h.update((r.left as u64).to_le_bytes());
        h.update((r.right as u64).to_le_bytes());
        h.update([u8::from(r.outcome)]);
        for v in &r.covariates {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(text)
        .map_err(|e| Error::InvalidInput(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidInput(
            "payload length is not a multiple of 8".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub final_nll: f64,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: FitDiagnostics,
}

impl From<&FitResult> for FitSummary {
    fn from(f: &FitResult) -> Self {
        Self {
            final_nll: f.final_nll,
            projected_gradient_norm: f.projected_gradient_norm,
            iterations: f.iterations,
            converged: f.converged,
            diagnostics: f.diagnostics.clone(),
        }
    }
}

/// Everything later commands need from a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub params: StackedParams,
    pub covariance: Option<CovarianceEstimate>,
    pub fit: FitSummary,
    pub seed: u64,
    pub data_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct CovarianceRepr {
    dim: usize,
    method: CovarianceMethod,
    replicates: usize,
    dropped: usize,
    seed: u64,
    sigma: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFileRepr {
    schema_version: u32,
    model_names: Vec<String>,
    covariate_names: Vec<String>,
    num_models: usize,
    covariate_dim: usize,
    /// Readable copy; `params_b64` is authoritative.
    params: StackedParams,
    params_b64: String,
    covariance: Option<CovarianceRepr>,
    fit: FitSummary,
    seed: u64,
    data_fingerprint: String,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        let covariance = self.covariance.as_ref().map(|c| CovarianceRepr {
            dim: c.dim(),
            method: c.method,
            replicates: c.replicates,
            dropped: c.dropped,
            seed: c.seed,
            // Column-major; Σ̂ is symmetric so the order is immaterial.
            sigma: encode_f64s(c.sigma.as_slice()),
        });
        let repr = ModelFileRepr {
            schema_version: SCHEMA_VERSION,
            model_names: self.model_names.clone(),
            covariate_names: self.covariate_names.clone(),
            num_models: self.params.num_models(),
            covariate_dim: self.params.covariate_dim(),
            params: self.params.clone(),
            params_b64: encode_f64s(self.params.as_slice()),
            covariance,
            fit: self.fit.clone(),
            seed: self.seed,
            data_fingerprint: self.data_fingerprint.clone(),
        };
        Ok(serde_json::to_string_pretty(&repr)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: ModelFileRepr = serde_json::from_str(text)?;
        if repr.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model file schema {}",
                repr.schema_version
            )));
        }
        let values = decode_f64s(&repr.params_b64)?;
        let params = StackedParams::from_vector(
            repr.num_models,
            repr.covariate_dim,
            DVector::from_vec(values),
        )?;
        if repr.model_names.len() != repr.num_models {
            return Err(Error::DimensionMismatch {
                expected: repr.num_models,
                found: repr.model_names.len(),
            });
        }
        if repr.covariate_names.len() != repr.covariate_dim {
            return Err(Error::DimensionMismatch {
                expected: repr.covariate_dim,
                found: repr.covariate_names.len(),
            });
        }
        let covariance = match repr.covariance {
            None => None,
            Some(c) => {
                let values = decode_f64s(&c.sigma)?;
                if values.len() != c.dim * c.dim || c.dim != params.as_slice().len() {
                    return Err(Error::DimensionMismatch {
                        expected: params.as_slice().len(),
                        found: c.dim,
                    });
                }
                Some(CovarianceEstimate {
                    sigma: DMatrix::from_vec(c.dim, c.dim, values),
                    replicates: c.replicates,
                    dropped: c.dropped,
                    seed: c.seed,
                    method: c.method,
                })
            }
        };
        Ok(Self {
            model_names: repr.model_names,
            covariate_names: repr.covariate_names,
            params,
            covariance,
            fit: repr.fit,
            seed: repr.seed,
            data_fingerprint: repr.data_fingerprint,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Named slopes per model, for reports.
    pub fn slope_table(&self) -> BTreeMap<String, Vec<f64>> {
        self.model_names
            .iter()
            .enumerate()
            .map(|(m, name)| (name.clone(), self.params.slope(m).to_vec()))
            .collect()
    }
}
