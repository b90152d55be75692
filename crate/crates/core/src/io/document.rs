use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::mixture::MixtureModel;
use crate::scalar::Real;
use crate::trainer::{FitOutcome, NuInit, TrainerConfig};

use super::write_atomic;

pub const FORMAT_VERSION: &str = "1";
/// Tolerance on the weight sum accepted on load.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// One kernel. Matrices are row-major; `nu` is `null` for Gaussian kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBlock {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub delta: Vec<f64>,
    pub nu: Option<f64>,
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

/// Configuration echo and outcome of the fit that produced a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub seed: u64,
    pub mode: String,
    pub beta: Vec<f64>,
    pub nu_init: Vec<f64>,
    pub nu_max: f64,
    pub delta_nu: f64,
    pub delta_l: Option<f64>,
    pub max_iter: usize,
    pub stop_rule: String,
    pub final_loglik: Option<f64>,
    pub iterations: usize,
    pub status: String,
}

impl FitMetadata {
    pub fn from_fit<T: Real>(config: &TrainerConfig<T>, outcome: &FitOutcome<T>) -> Result<Self> {
        let g = outcome.model.g();
        let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
        let nu_init = match &config.nu_init {
            NuInit::Scalar(v) => vec![v.to_f64_lossy(); g],
            NuInit::PerKernel(v) => f(v),
        };
        Ok(FitMetadata {
            seed: config.seed,
            mode: config.constraint_mode.to_string(),
            beta: f(&config.beta.resolve(g)?),
            nu_init,
            nu_max: config.nu_max.to_f64_lossy(),
            delta_nu: config.delta_nu.to_f64_lossy(),
            delta_l: config.delta_l.map(|v| v.to_f64_lossy()),
            max_iter: config.max_iter,
            stop_rule: config.stop_rule.to_string(),
            final_loglik: outcome.trace.final_loglik().map(|v| v.to_f64_lossy()),
            iterations: outcome.trace.len(),
            status: outcome.trace.status.as_str().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: String,
    pub p: usize,
    pub g: usize,
    pub kernels: Vec<KernelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<FitMetadata>,
}

fn row_major<T: Real>(m: &DMatrix<T>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)].to_f64_lossy());
        }
    }
    out
}

impl ModelDocument {
    pub fn from_model<T: Real>(model: &MixtureModel<T>, metadata: Option<FitMetadata>) -> Self {
        let beta = metadata.as_ref().map(|m| m.beta.clone());
        let kernels = model
            .kernels
            .iter()
            .zip(&model.weights)
            .enumerate()
            .map(|(i, (k, w))| KernelBlock {
                mu: k.mu.iter().map(|v| v.to_f64_lossy()).collect(),
                sigma: row_major(&k.sigma),
                delta: row_major(&k.delta),
                nu: (!k.is_gaussian()).then(|| k.nu.to_f64_lossy()),
                omega: w.to_f64_lossy(),
                beta: beta.as_ref().and_then(|b| b.get(i).copied()),
            })
            .collect();
        ModelDocument {
            format_version: FORMAT_VERSION.to_string(),
            p: model.p(),
            g: model.g(),
            kernels,
            metadata,
        }
    }

    /// Checks the schema and builds the model.
    pub fn to_model<T: Real>(&self) -> Result<MixtureModel<T>> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version.clone(),
                expected: FORMAT_VERSION.to_string(),
            });
        }
        let (p, g) = (self.p, self.g);
        if g == 0 || p == 0 || self.kernels.len() != g {
            return Err(Error::Document(format!(
                "declared p = {p}, g = {g} with {} kernel blocks",
                self.kernels.len()
            )));
        }
        let sum: f64 = self.kernels.iter().map(|k| k.omega).sum();
        if !((sum - 1.0).abs() <= WEIGHT_SUM_TOL) {
            return Err(Error::Document(format!("weights sum to {sum}, not 1")));
        }
        let mut kernels = Vec::with_capacity(g);
        let mut weights = Vec::with_capacity(g);
        for (i, b) in self.kernels.iter().enumerate() {
            if b.mu.len() != p || b.sigma.len() != p * p || b.delta.len() != p * p {
                return Err(Error::Document(format!("kernel {}: block sizes do not match p = {p}", i + 1)));
            }
            let lit = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
            let nu = b.nu.map_or(T::infinity(), T::lit);
            let k = KernelParams::new(
                DVector::from_vec(lit(&b.mu)),
                DMatrix::from_row_slice(p, p, &lit(&b.sigma)),
                DMatrix::from_row_slice(p, p, &lit(&b.delta)),
                nu,
            )
            .map_err(|e| Error::Document(format!("kernel {}: {e}", i + 1)))?;
            if !(b.omega > 0.0) {
                return Err(Error::Document(format!("kernel {}: weight {} is not positive", i + 1, b.omega)));
            }
            kernels.push(k);
            weights.push(T::lit(b.omega));
        }
        // the weight sum was checked above at the document tolerance
        Ok(MixtureModel { kernels, weights })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Document(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        if let Some(found) = v.get("format_version").and_then(|f| f.as_str()) {
            if found != FORMAT_VERSION {
                return Err(Error::FormatVersion {
                    found: found.to_string(),
                    expected: FORMAT_VERSION.to_string(),
                });
            }
        }
        serde_json::from_value(v).map_err(|e| Error::Document(e.to_string()))
    }
}

pub fn save_model(doc: &ModelDocument, path: &Path) -> Result<()> {
    write_atomic(path, doc.to_json()?.as_bytes())
}

/// Reads and validates a model document.
pub fn load_model(path: &Path) -> Result<ModelDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc = ModelDocument::from_json(&text)?;
    doc.to_model::<f64>()?;
    Ok(doc)
}
