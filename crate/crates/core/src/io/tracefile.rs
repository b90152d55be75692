use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::trainer::TrainingTrace;

use super::write_atomic;

/// CSV text with header `iter,loglik,nu_1..nu_g,omega_1..omega_g,flags`.
/// `ν` fields are empty for Gaussian fits.
pub fn trace_to_csv<T: Real>(trace: &TrainingTrace<T>) -> Result<String> {
    let first = trace
        .records
        .first()
        .ok_or_else(|| Error::InvalidParameter("trace has no iterations".into()))?;
    let g = first.omega.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["iter".to_string(), "loglik".to_string()];
    header.extend((1..=g).map(|i| format!("nu_{i}")));
    header.extend((1..=g).map(|i| format!("omega_{i}")));
    header.push("flags".into());
    w.write_record(&header).map_err(|e| Error::Document(e.to_string()))?;
    for r in &trace.records {
        let mut fields = vec![r.iter.to_string(), r.loglik.to_f64_lossy().to_string()];
        match &r.nu {
            Some(nu) => fields.extend(nu.iter().map(|v| v.to_f64_lossy().to_string())),
            None => fields.extend(std::iter::repeat(String::new()).take(g)),
        }
        fields.extend(r.omega.iter().map(|v| v.to_f64_lossy().to_string()));
        fields.push(r.flags_string());
        w.write_record(&fields).map_err(|e| Error::Document(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Document(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Document(e.to_string()))
}

pub fn write_trace<T: Real>(trace: &TrainingTrace<T>, path: &Path) -> Result<()> {
    write_atomic(path, trace_to_csv(trace)?.as_bytes())
}
