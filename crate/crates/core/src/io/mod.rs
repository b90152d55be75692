//! Data ingestion, synthetic data, and model and trace persistence.

mod csvdata;
mod document;
mod synthetic;
mod tracefile;

pub use csvdata::{load_csv, write_csv, CsvLoad};
pub use document::{load_model, save_model, FitMetadata, KernelBlock, ModelDocument, FORMAT_VERSION};
pub use synthetic::{generate_synthetic, ComponentSpec, SyntheticSpec};
pub use tracefile::{trace_to_csv, write_trace};

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, "not a file path"))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
