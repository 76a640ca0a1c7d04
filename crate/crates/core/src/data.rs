//! Synthetic benchmarks and the on-disk formats.
//!
//! Dataset CSV: header `id,f0,...,f{d-1}` with an optional trailing `label`
//! column holding `1` or `-1`. Labeling CSV: header `id,pseudo_label`.
//! Features are written in shortest round-trip form (Rust's `{:?}` for
//! `f64`), so a write/read cycle is exact. Separator `,`, newline `\n`, UTF-8.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::domain::{Dataset, Label, PseudoLabeling, Sample, SampleId};
use crate::error::{Error, Result};
use crate::pipeline::RunResult;

/// Two isotropic Gaussian classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianSpec {
    pub dim: usize,
    pub mean_pos: Vec<f64>,
    pub mean_neg: Vec<f64>,
    /// Multiplier of the identity covariance.
    pub cov_scale: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub seed: u64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            mean_pos: vec![1.5, 0.0],
            mean_neg: vec![-1.5, 0.0],
            cov_scale: 1.0,
            n_pos: 2000,
            n_neg: 2000,
            seed: 0,
        }
    }
}

impl GaussianSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        if self.mean_pos.len() != self.dim || self.mean_neg.len() != self.dim {
            return Err(Error::invalid(format!(
                "mean vectors must have length dim={}",
                self.dim
            )));
        }
        if self.mean_pos.iter().chain(&self.mean_neg).any(|v| !v.is_finite()) {
            return Err(Error::invalid("means must be finite"));
        }
        if !(self.cov_scale > 0.0 && self.cov_scale.is_finite()) {
            return Err(Error::invalid("cov_scale must be positive"));
        }
        if self.n_pos == 0 || self.n_neg == 0 {
            return Err(Error::invalid("n_pos and n_neg must both be at least 1"));
        }
        Ok(())
    }
}

/// Draws the two classes and interleaves them with a seeded shuffle. Ids are
/// `0..N` in output order.
pub fn generate_gaussians(spec: &GaussianSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut classes: Vec<Label> = std::iter::repeat_n(Label::Positive, spec.n_pos)
        .chain(std::iter::repeat_n(Label::Negative, spec.n_neg))
        .collect();
    classes.shuffle(&mut rng);
    let noise = Normal::new(0.0, spec.cov_scale.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let samples = classes
        .into_iter()
        .enumerate()
        .map(|(i, y)| {
            let mean = match y {
                Label::Positive => &spec.mean_pos,
                Label::Negative => &spec.mean_neg,
            };
            let features = mean.iter().map(|m| m + noise.sample(&mut rng)).collect();
            Sample::new(i as u64, features, Some(y))
        })
        .collect();
    Dataset::new(spec.dim, samples, "gaussian")
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// Iterates records with their 1-based line numbers.
fn records<'a>(
    path: &'a Path,
    reader: &'a mut csv::Reader<fs::File>,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'a {
    reader.records().map(move |r| {
        let rec = r.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        Ok((line, rec))
    })
}

fn csv_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_id(path: &Path, line: u64, field: &str) -> Result<SampleId> {
    field
        .trim()
        .parse()
        .map_err(|_| csv_err(path, line, format!("invalid sample id {field:?}")))
}

fn parse_label(path: &Path, line: u64, field: &str) -> Result<Label> {
    field
        .parse()
        .map_err(|_| csv_err(path, line, format!("invalid label {field:?}, expected 1 or -1")))
}

pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let mut rows = records(path, &mut reader);
    let (line, header) = rows
        .next()
        .transpose()?
        .ok_or_else(|| csv_err(path, 1, "missing header"))?;
    let cols: Vec<&str> = header.iter().collect();
    let with_label = cols.last() == Some(&"label");
    let n_feat = cols.len().saturating_sub(1 + usize::from(with_label));
    let header_ok = cols.first() == Some(&"id")
        && n_feat >= 1
        && (0..n_feat).all(|k| cols[1 + k] == format!("f{k}"));
    if !header_ok {
        return Err(csv_err(
            path,
            line,
            "malformed header, expected id,f0,...,f{d-1}[,label]",
        ));
    }

    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for row in rows {
        let (line, rec) = row?;
        if rec.len() != cols.len() {
            return Err(csv_err(
                path,
                line,
                format!("ragged row: {} fields, header has {}", rec.len(), cols.len()),
            ));
        }
        let id = parse_id(path, line, &rec[0])?;
        if !seen.insert(id) {
            return Err(csv_err(path, line, format!("duplicate sample id {id}")));
        }
        let features = (1..=n_feat)
            .map(|k| {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| csv_err(path, line, format!("non-numeric feature {:?}", &rec[k])))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = if with_label {
            Some(parse_label(path, line, &rec[n_feat + 1])?)
        } else {
            None
        };
        samples.push(Sample::new(id, features, label));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(n_feat, samples, name)
}

pub fn write_dataset_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let with_label = dataset.has_truth();
    let mut w = csv_writer(path)?;
    let mut header = vec!["id".to_string()];
    header.extend((0..dataset.dim()).map(|k| format!("f{k}")));
    if with_label {
        header.push("label".into());
    }
    let io = |e: csv::Error| Error::io(path, e);
    w.write_record(&header).map_err(io)?;
    let mut row = Vec::with_capacity(header.len());
    for s in dataset.samples() {
        row.clear();
        row.push(s.id.to_string());
        row.extend(s.features.iter().map(|v| format!("{v:?}")));
        if let Some(l) = s.true_label {
            row.push(l.to_string());
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `id,pseudo_label` rows and validates coverage against `dataset`.
pub fn read_labeling_csv(path: impl AsRef<Path>, dataset: &Dataset) -> Result<PseudoLabeling> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let mut rows = records(path, &mut reader);
    let (line, header) = rows
        .next()
        .transpose()?
        .ok_or_else(|| csv_err(path, 1, "missing header"))?;
    if header.iter().collect::<Vec<_>>() != ["id", "pseudo_label"] {
        return Err(csv_err(path, line, "malformed header, expected id,pseudo_label"));
    }
    let mut labels = BTreeMap::new();
    for row in rows {
        let (line, rec) = row?;
        if rec.len() != 2 {
            return Err(csv_err(path, line, format!("ragged row: {} fields, expected 2", rec.len())));
        }
        let id = parse_id(path, line, &rec[0])?;
        if !dataset.contains(id) {
            return Err(csv_err(path, line, format!("sample id {id} is not part of the dataset")));
        }
        let label = parse_label(path, line, &rec[1])?;
        if labels.insert(id, label).is_some() {
            return Err(csv_err(path, line, format!("duplicate sample id {id}")));
        }
    }
    PseudoLabeling::new(dataset, 0, labels)
}

/// Writes rows in id order.
pub fn write_labeling_csv(labeling: &PseudoLabeling, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| Error::io(path, e);
    w.write_record(["id", "pseudo_label"]).map_err(io)?;
    for (id, l) in labeling.iter() {
        w.write_record([id.to_string(), l.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `curves.csv` contents: one row per (seed, iteration), seeds in run order.
pub fn curves_csv(result: &RunResult) -> String {
    let mut out = String::from("iteration,seed,test_accuracy,theta_p,theta_n,n_pos,n_neg\n");
    for run in &result.per_seed {
        for r in &run.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iteration,
                run.seed,
                opt(r.test_accuracy),
                opt(r.measured_theta_p),
                opt(r.measured_theta_n),
                r.n_pos,
                r.n_neg
            ));
        }
    }
    out
}

pub fn summary_json(result: &RunResult) -> serde_json::Value {
    json!({
        "config": result.config,
        "estimator": result.config.estimator(),
        "iterations": result.aggregate,
        "final_mean_accuracy": result.final_mean_accuracy(),
        "wall_clock_seconds": result.wall_clock_seconds,
    })
}

pub(crate) fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Emits `curves.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_run_result(result: &RunResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("curves.csv"), curves_csv(result).as_bytes())?;
    write_json(&summary_json(result), &dir.join("summary.json"))
}
