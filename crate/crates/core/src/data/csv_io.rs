//! Numeric CSV ingestion and emission.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sample::SampleSet;

/// Loads one point per row. Cells are trimmed before parsing.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<SampleSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    read_csv(file, has_header, path)
}

/// As [`load_csv`] for any reader; `label` names the source in errors.
pub fn read_csv<R: Read>(reader: R, has_header: bool, label: &Path) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Csv {
            path: label.to_path_buf(),
            row: line,
            column: 0,
            reason: e.to_string(),
        })?;
        if i == 0 && has_header {
            continue;
        }
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let width = *dim.get_or_insert(rec.len());
        if rec.len() != width {
            return Err(Error::Csv {
                path: label.to_path_buf(),
                row: line,
                column: rec.len().min(width) + 1,
                reason: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                path: label.to_path_buf(),
                row: line,
                column: j + 1,
                reason: format!("not a number: {cell:?}"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    match dim {
        Some(d) if rows > 0 => SampleSet::from_flat(data, d),
        _ => Err(Error::Data {
            path: label.to_path_buf(),
            reason: "no data rows".into(),
        }),
    }
}

/// Writes one point per row using shortest round-trip float formatting.
pub fn write_csv<W: Write>(writer: W, points: &SampleSet, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for p in points.iter() {
        w.write_record(p.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, points: &SampleSet, header: Option<&[String]>) -> Result<()> {
    write_csv(File::create(path)?, points, header)
}

/// Replaces every observation by its Euclidean norm (for multi-axis sensor
/// recordings that should be scored as one channel).
pub fn l2_norm_rows(series: &[Vec<f64>]) -> Vec<Vec<f64>> {
    series
        .iter()
        .map(|o| vec![o.iter().map(|v| v * v).sum::<f64>().sqrt()])
        .collect()
}
