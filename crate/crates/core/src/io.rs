//! Model JSON and dataset CSV formats.
//!
//! Model file:
//! `{k, d, sigma, delta, pmin, probs, weights, cov_sqrts}` where `cov_sqrts` is
//! either a list of full matrices, `{"diag": [[...], ...]}`, or `"identity"`.
//!
//! Dataset file: CSV with header `x1,...,xd,alpha[,z]`. Values are written in
//! shortest round-trip decimal form, so a write/read cycle is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::model::{Dataset, MixtureModel, ModelBounds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovSpec {
    Full(Vec<Vec<Vec<f64>>>),
    Diag { diag: Vec<Vec<f64>> },
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub k: usize,
    pub d: usize,
    pub sigma: f64,
    pub delta: f64,
    pub pmin: f64,
    pub probs: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub cov_sqrts: CovSpec,
}

impl ModelFile {
    pub fn into_model(self) -> Result<MixtureModel> {
        let ModelFile {
            k,
            d,
            sigma,
            delta,
            pmin,
            probs,
            weights,
            cov_sqrts,
        } = self;
        if probs.len() != k || weights.len() != k {
            return Err(MlrError::shape(format!(
                "declared k = {k} but {} probs and {} weights",
                probs.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| w.len() != d) {
            return Err(MlrError::shape(format!("every weight must have length d = {d}")));
        }
        let covs = match cov_sqrts {
            CovSpec::Named(name) if name == "identity" => vec![DMatrix::identity(d, d); k],
            CovSpec::Named(name) => {
                return Err(MlrError::Parse(format!("unknown covariance shorthand {name:?}")));
            }
            CovSpec::Diag { diag } => {
                if diag.len() != k || diag.iter().any(|v| v.len() != d) {
                    return Err(MlrError::shape("diag covariance list must be k vectors of length d"));
                }
                diag.into_iter()
                    .map(|v| DMatrix::from_diagonal(&DVector::from_vec(v)))
                    .collect()
            }
            CovSpec::Full(mats) => {
                if mats.len() != k {
                    return Err(MlrError::shape("cov_sqrts must list k matrices"));
                }
                mats.into_iter()
                    .map(|rows| {
                        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                            return Err(MlrError::shape("each covariance root must be d x d"));
                        }
                        Ok(DMatrix::from_row_iterator(d, d, rows.into_iter().flatten()))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        MixtureModel::new(
            probs,
            weights.into_iter().map(DVector::from_vec).collect(),
            covs,
            ModelBounds { sigma, delta, pmin },
        )
    }

    pub fn from_model(model: &MixtureModel) -> Self {
        let d = model.d();
        let is_diag = |m: &DMatrix<f64>| (0..d).all(|r| (0..d).all(|c| r == c || m[(r, c)] == 0.0));
        let cov_sqrts = if model.cov_sqrts.iter().all(|m| *m == DMatrix::identity(d, d)) {
            CovSpec::Named("identity".to_string())
        } else if model.cov_sqrts.iter().all(is_diag) {
            CovSpec::Diag {
                diag: model.cov_sqrts.iter().map(|m| m.diagonal().iter().copied().collect()).collect(),
            }
        } else {
            CovSpec::Full(
                model
                    .cov_sqrts
                    .iter()
                    .map(|m| (0..d).map(|r| (0..d).map(|c| m[(r, c)]).collect()).collect())
                    .collect(),
            )
        };
        ModelFile {
            k: model.k(),
            d,
            sigma: model.bounds.sigma,
            delta: model.bounds.delta,
            pmin: model.bounds.pmin,
            probs: model.probs.clone(),
            weights: model.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            cov_sqrts,
        }
    }
}

pub fn parse_model(json: &str) -> Result<MixtureModel> {
    let file: ModelFile = serde_json::from_str(json).map_err(|e| MlrError::Parse(e.to_string()))?;
    file.into_model()
}

pub fn model_to_json(model: &MixtureModel) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model file serializes")
}

pub fn read_model(path: &Path) -> Result<MixtureModel> {
    parse_model(&std::fs::read_to_string(path)?)
}

pub fn write_model(path: &Path, model: &MixtureModel) -> Result<()> {
    std::fs::write(path, model_to_json(model) + "\n")?;
    Ok(())
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn write_dataset_to<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let map_csv = |e: csv::Error| MlrError::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(writer);
    let d = data.dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("alpha".into());
    if data.has_hidden() {
        header.push("z".into());
    }
    w.write_record(&header).map_err(map_csv)?;
    let z = data.hidden_z();
    let mut record = Vec::with_capacity(d + 2);
    for (i, (x, a)) in data.rows().enumerate() {
        record.clear();
        record.extend(x.iter().map(|&v| format_f64(v)));
        record.push(format_f64(a));
        if let Some(z) = z {
            record.push(z[i].to_string());
        }
        w.write_record(&record).map_err(map_csv)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_from<R: Read>(reader: R) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(|e| MlrError::Parse(e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_z = names.last() == Some(&"z");
    let alpha_col = if has_z { names.len().checked_sub(2) } else { names.len().checked_sub(1) };
    let alpha_col = match alpha_col {
        Some(c) if c >= 1 && names[c] == "alpha" => c,
        _ => return Err(MlrError::Parse("header must be x1,...,xd,alpha[,z]".into())),
    };
    let d = alpha_col;
    for (i, name) in names[..d].iter().enumerate() {
        if *name != format!("x{}", i + 1) {
            return Err(MlrError::Parse(format!("unexpected column {name:?} at position {}", i + 1)));
        }
    }
    let mut x = Vec::new();
    let mut alpha = Vec::new();
    let mut z = has_z.then(Vec::new);
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| MlrError::Parse(e.to_string()))?;
        if rec.len() != names.len() {
            return Err(MlrError::Parse(format!("row {} has {} fields", line + 1, rec.len())));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| MlrError::Parse(format!("row {}: {e}", line + 1)))
        };
        for field in rec.iter().take(d) {
            x.push(num(field)?);
        }
        alpha.push(num(&rec[d])?);
        if let Some(z) = z.as_mut() {
            let id = rec[d + 1]
                .trim()
                .parse::<usize>()
                .map_err(|e| MlrError::Parse(format!("row {}: {e}", line + 1)))?;
            z.push(id);
        }
    }
    Dataset::new(d, x, alpha, z)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    read_dataset_from(std::fs::File::open(path)?)
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset_to(std::io::BufWriter::new(std::fs::File::create(path)?), data)
}
