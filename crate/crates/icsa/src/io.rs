//! CSV ingestion and report emission.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{ColumnKind, DataMatrix};
use crate::error::{Error, Result};
use crate::simulate::GridRow;
use crate::theory::BoundReport;

/// Optional overrides applied while loading.
#[derive(Debug, Clone, Default)]
pub struct SchemaHints {
    /// Columns forced to binary (others are auto-detected by value set).
    pub binary: Vec<String>,
    /// Columns forced to numeric even when their values are all 0/1.
    pub numeric: Vec<String>,
    /// Name of a 0/1 column marking outlier rows; it is removed from the
    /// data matrix and returned as an index set. Auto-detected when a
    /// header equals "outlier" (case-insensitive).
    pub outlier_column: Option<String>,
}

/// A loaded table plus any outlier flags found alongside it.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: DataMatrix,
    pub outliers: Vec<usize>,
}

/// Loads a rectangular CSV with a header row. Columns whose value set is
/// contained in {0, 1} are tagged binary unless overridden; columns that
/// fail numeric parsing on every row are encoded as categorical codes in
/// order of first appearance.
pub fn load_csv(path: &Path, hints: &SchemaHints) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let raw: Vec<Vec<String>> = reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| Error::IngestError {
                row: i + 2,
                column: 0,
                message: e.to_string(),
            })?;
            Ok(rec.iter().map(str::to_string).collect())
        })
        .collect::<Result<_>>()?;

    let n = raw.len();
    let p = headers.len();
    if n == 0 {
        return Err(Error::SchemaError("no data rows".into()));
    }

    // Per column: numeric when every cell parses; otherwise categorical
    // codes. A mixed column is an ingest error at the first bad cell.
    let mut values = DMatrix::zeros(n, p);
    for j in 0..p {
        let parsed: Vec<std::result::Result<f64, ()>> = raw
            .iter()
            .map(|row| row[j].trim().parse::<f64>().map_err(|_| ()))
            .collect();
        let ok_count = parsed.iter().filter(|r| r.is_ok()).count();
        if ok_count == n {
            for (i, v) in parsed.into_iter().enumerate() {
                values[(i, j)] = v.unwrap();
            }
        } else if ok_count == 0 {
            let mut codes: HashMap<String, f64> = HashMap::new();
            for (i, row) in raw.iter().enumerate() {
                let next = codes.len() as f64;
                let code = *codes.entry(row[j].clone()).or_insert(next);
                values[(i, j)] = code;
            }
        } else {
            let bad = parsed.iter().position(|r| r.is_err()).unwrap();
            return Err(Error::IngestError {
                row: bad + 2,
                column: j + 1,
                message: format!("unparsable cell {:?}", raw[bad][j]),
            });
        }
    }

    let mut kinds = Vec::with_capacity(p);
    for (j, name) in headers.iter().enumerate() {
        let kind = if hints.numeric.iter().any(|h| h == name) {
            ColumnKind::Numeric
        } else if hints.binary.iter().any(|h| h == name)
            || values.column(j).iter().all(|&v| v == 0.0 || v == 1.0)
        {
            ColumnKind::Binary
        } else {
            ColumnKind::Numeric
        };
        kinds.push(kind);
    }
    for forced in &hints.binary {
        if !headers.iter().any(|h| h == forced) {
            return Err(Error::SchemaError(format!("unknown binary column {forced:?}")));
        }
    }

    // Split off the outlier flag column if present.
    let flag_idx = match &hints.outlier_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::SchemaError(format!("outlier column {name:?} not found"))
        })?),
        None => headers.iter().position(|h| h.eq_ignore_ascii_case("outlier")),
    };

    let (values, headers, kinds, outliers) = match flag_idx {
        Some(f) => {
            let outliers: Vec<usize> = (0..n).filter(|&i| values[(i, f)] != 0.0).collect();
            let keep: Vec<usize> = (0..p).filter(|&j| j != f).collect();
            let v = values.select_columns(keep.iter());
            let h: Vec<String> = keep.iter().map(|&j| headers[j].clone()).collect();
            let k: Vec<ColumnKind> = keep.iter().map(|&j| kinds[j]).collect();
            (v, h, k, outliers)
        }
        None => (values, headers, kinds, Vec::new()),
    };

    Ok(LoadedData {
        data: DataMatrix::new(values, headers, kinds)?,
        outliers,
    })
}

pub fn write_data_csv(path: &Path, data: &DataMatrix) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(data.names())?;
    for i in 0..data.nrows() {
        let row: Vec<String> = (0..data.ncols())
            .map(|j| format_value(data.values()[(i, j)]))
            .collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

fn format_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        // Round-trippable float formatting.
        format!("{v:?}")
    }
}

pub fn write_grid_csv(path: &Path, rows: &[GridRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "scenario", "n", "p", "kappa", "method", "metric", "median", "q1", "q3", "failures",
    ])?;
    for r in rows {
        writer.write_record([
            r.scenario.to_string(),
            r.n.to_string(),
            r.p.to_string(),
            format_value(r.kappa),
            r.method.clone(),
            r.metric.clone(),
            format_value(r.median),
            format_value(r.q1),
            format_value(r.q3),
            r.failures.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_theorem_csv(path: &Path, rows: &[(f64, BoundReport)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["H", "empirical_max", "bound", "pass"])?;
    for (h, report) in rows {
        writer.write_record([
            format_value(*h),
            format_value(report.empirical_max),
            format_value(report.bound),
            if report.pass { "1.0" } else { "0.0" }.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
