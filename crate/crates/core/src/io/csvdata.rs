use std::path::Path;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::write_atomic;

/// Loaded data plus the rows that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvLoad<T: Real> {
    pub data: DataMatrix<T>,
    pub columns: Vec<String>,
    /// One-based data row numbers (header excluded) that were rejected.
    pub rejected: Vec<usize>,
}

/// Reads the named columns of a headed CSV file. Rows with a missing or
/// non-numeric selected field are skipped and reported.
pub fn load_csv<T: Real>(path: &Path, columns: &[&str]) -> Result<CsvLoad<T>> {
    if columns.is_empty() {
        return Err(Error::Data("no columns selected".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, e))?;
    let header = reader.headers().map_err(|e| Error::io(path, e))?.clone();
    let index: Vec<usize> = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::Data(format!("column {c:?} not found in {}", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row_no = k + 1;
        let parsed = record.ok().and_then(|r| {
            index
                .iter()
                .map(|&i| r.get(i).and_then(|v| v.parse::<f64>().ok()).filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
        });
        match parsed {
            Some(v) => rows.push(v.into_iter().map(T::lit).collect::<Vec<T>>()),
            None => rejected.push(row_no),
        }
    }
    if !rejected.is_empty() {
        log::warn!(
            "{}: skipped malformed rows {}",
            path.display(),
            rejected.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
        );
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no usable rows", path.display())));
    }
    Ok(CsvLoad {
        data: DataMatrix::from_vecs(&rows)?,
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rejected,
    })
}

/// Writes rows under `header`, with an optional trailing integer column.
pub fn write_csv<T: Real>(
    path: &Path,
    header: &[String],
    data: &DataMatrix<T>,
    extra: Option<(&str, &[usize])>,
) -> Result<()> {
    if header.len() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "{} header names for {} columns",
            header.len(),
            data.p()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<String> = header.to_vec();
    if let Some((name, _)) = extra {
        head.push(name.to_string());
    }
    w.write_record(&head).map_err(|e| Error::io(path, e))?;
    for (j, row) in data.rows().iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_f64_lossy().to_string()).collect();
        if let Some((_, labels)) = extra {
            fields.push(labels[j].to_string());
        }
        w.write_record(&fields).map_err(|e| Error::io(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn selects_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "Sex,Ht,%Bfat\nf,170.1,20.5\nm,180.0,10.2\nf,165.3,25.0\n").unwrap();
        let l = load_csv::<f64>(&p, &["Ht", "%Bfat"]).unwrap();
        assert_eq!((l.data.n(), l.data.p()), (3, 2));
        assert_eq!(l.data.row(1)[0], 180.0);
        assert!(l.rejected.is_empty());
    }

    #[test]
    fn reports_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "x,y\n1,2\nfoo,3\n4,5\n").unwrap();
        let l = load_csv::<f64>(&p, &["x", "y"]).unwrap();
        assert_eq!(l.data.n(), 2);
        assert_eq!(l.rejected, vec![2]);
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        assert!(matches!(load_csv::<f64>(&p, &["x"]), Err(Error::Io { .. })));
        fs::write(&p, "x,y\na,b\n").unwrap();
        assert!(matches!(load_csv::<f64>(&p, &["z"]), Err(Error::Data(_))));
        assert!(matches!(load_csv::<f64>(&p, &["x"]), Err(Error::Data(_))));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        let d = DataMatrix::from_vecs(&[vec![0.1, 1.0 / 3.0], vec![-2.5, 1e-300]]).unwrap();
        write_csv(&p, &["a".into(), "b".into()], &d, Some(("label", &[0, 1]))).unwrap();
        let back = load_csv::<f64>(&p, &["a", "b"]).unwrap();
        assert_eq!(back.data, d);
    }
}
