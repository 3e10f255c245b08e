//! CSV containers for offline artifacts. Values are written with Rust's
//! shortest round-trip float formatting, so reading back is bit-exact.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Dense matrix: a `rows,cols` header line followed by one line per row.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record([m.nrows().to_string(), m.ncols().to_string()])?;
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records = rdr.records();
    let head = records
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty file", path.display())))??;
    let parse_dim = |k: usize| -> Result<usize> {
        head.get(k)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("{}: bad header", path.display())))
    };
    let (rows, cols) = (parse_dim(0)?, parse_dim(1)?);
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        let rec = records
            .next()
            .ok_or_else(|| Error::Format(format!("{}: missing row {r}", path.display())))??;
        if rec.len() != cols {
            return Err(Error::Format(format!("{}: row {r} has {} entries", path.display(), rec.len())));
        }
        for (c, s) in rec.iter().enumerate() {
            m[(r, c)] = s
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad value {s:?}", path.display())))?;
        }
    }
    Ok(m)
}

pub fn write_indices(path: &Path, idx: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index"])?;
    for i in idx {
        w.write_record([i.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<usize>().map(|r| r.map_err(Error::from)).collect()
}

/// Sparse matrix as `row,col,value` triplets after a `rows,cols` header row.
pub fn write_sparse(path: &Path, a: &CsrMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record([a.nrows.to_string(), a.ncols.to_string()])?;
    for r in 0..a.nrows {
        let (cols, vals) = a.row(r);
        for (c, v) in cols.iter().zip(vals) {
            w.write_record([r.to_string(), c.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_sparse(path: &Path) -> Result<CsrMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records = rdr.records();
    let bad = || Error::Format(format!("{}: malformed sparse file", path.display()));
    let head = records.next().ok_or_else(bad)??;
    let rows: usize = head.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let cols: usize = head.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let mut t = Vec::new();
    for rec in records {
        let rec = rec?;
        let r: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let c: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let v: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if r >= rows || c >= cols {
            return Err(bad());
        }
        t.push((r, c, v));
    }
    Ok(CsrMatrix::from_triplets(rows, cols, t))
}
