//! CSV ingestion and export of `(y, x, Z)` datasets.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::sim::Dataset;

/// A parsed dataset together with the names of the nuisance columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedData {
    pub x: Vector,
    /// Absent when no response column was requested.
    pub y: Option<Vector>,
    pub z: Mat,
    pub z_names: Vec<String>,
}

/// Reads a headered CSV; every column other than `target` and `response` goes into `Z`.
pub fn read_csv<R: Read>(reader: R, target: &str, response: Option<&str>) -> Result<LoadedData> {
    if Some(target) == response {
        return Err(Error::InvalidInput("target and response columns must differ".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::BadColumn(name.to_string()))
    };
    let xi = find(target)?;
    let yi = response.map(find).transpose()?;
    let zi: Vec<usize> = (0..header.len()).filter(|&c| c != xi && Some(c) != yi).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!("row {} has {} fields, header has {}", line + 1, rec.len(), header.len())));
        }
        let mut row = Vec::with_capacity(rec.len());
        for (c, field) in rec.iter().enumerate() {
            if field.is_empty() {
                return Err(Error::Parse(format!("missing value in row {}, column {}", line + 1, header[c])));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}, column {}: cannot parse {field:?}", line + 1, header[c])))?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("row {}, column {}", line + 1, header[c])));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let n = rows.len();
    let x = Vector::from_iterator(n, rows.iter().map(|r| r[xi]));
    let y = yi.map(|yi| Vector::from_iterator(n, rows.iter().map(|r| r[yi])));
    let z = Mat::from_fn(n, zi.len(), |i, j| rows[i][zi[j]]);
    Ok(LoadedData { x, y, z, z_names: zi.iter().map(|&c| header[c].clone()).collect() })
}

pub fn read_csv_path(path: &Path, target: &str, response: Option<&str>) -> Result<LoadedData> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(f, target, response)
}

/// Writes columns `y, x, z1..zp` with 17 significant digits, which parse back
/// to the same doubles.
pub fn write_csv<W: Write>(data: &Dataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let p = data.z.ncols();
    let mut header = vec!["y".to_string(), "x".to_string()];
    header.extend((1..=p).map(|j| format!("z{j}")));
    out.write_record(&header)?;
    for i in 0..data.y.len() {
        let mut rec = vec![format!("{:.16e}", data.y[i]), format!("{:.16e}", data.x[i])];
        rec.extend((0..p).map(|j| format!("{:.16e}", data.z[(i, j)])));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
