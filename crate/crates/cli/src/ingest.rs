//! CSV ingestion: a header row of column names, an optional leading ISO-8601
//! date column, then one numeric row per observation.

use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use shrinkcov::portfolio::net_returns;
use shrinkcov::ReturnsPanel;

use crate::error::{CliError, Result};

/// Cells read as missing values.
const MISSING: [&str; 7] = ["", "NA", "N/A", "NaN", "nan", "null", "NULL"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Drop every column with a missing value instead of failing.
    pub drop_incomplete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub data: DMatrix<f64>,
    pub columns: Vec<String>,
    pub dates: Option<Vec<String>>,
    /// Columns removed because of missing values.
    pub dropped: Vec<String>,
}

impl Table {
    /// Keep only the named columns, in the given order.
    pub fn select(&self, names: &[String], source_name: &str) -> Result<Table> {
        let mut idx = Vec::with_capacity(names.len());
        for name in names {
            match self.columns.iter().position(|c| c == name) {
                Some(i) => idx.push(i),
                None => {
                    return Err(CliError::Input {
                        source_name: source_name.into(),
                        message: format!("missing column '{name}'"),
                    })
                }
            }
        }
        Ok(Table {
            data: self.data.select_columns(&idx),
            columns: names.to_vec(),
            dates: self.dates.clone(),
            dropped: self.dropped.clone(),
        })
    }
}

fn is_iso_date(s: &str) -> bool {
    NaiveDate::from_str(s).is_ok()
        || NaiveDateTime::from_str(s).is_ok()
        || DateTime::parse_from_rfc3339(s).is_ok()
}

pub fn read_table(path: &Path, opts: IngestOptions) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_table(&text, &path.display().to_string(), opts)
}

pub fn parse_table(text: &str, source_name: &str, opts: IngestOptions) -> Result<Table> {
    let schema = |line: usize, message: String| CliError::Schema {
        source_name: source_name.into(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        records.push((line, rec));
    }
    let Some((header_line, header)) = records.first() else {
        return Err(CliError::Input {
            source_name: source_name.into(),
            message: "empty file".into(),
        });
    };
    let width = header.len();
    let body = &records[1..];
    for (line, rec) in body {
        if rec.len() != width {
            return Err(schema(
                *line,
                format!("expected {width} fields as in the header, found {}", rec.len()),
            ));
        }
    }
    let first = header.get(0).unwrap_or("");
    let dated = first.eq_ignore_ascii_case("date")
        || body.first().is_some_and(|(_, r)| is_iso_date(r.get(0).unwrap_or("")));
    let offset = usize::from(dated);
    let columns: Vec<String> = header.iter().skip(offset).map(str::to_string).collect();
    if columns.is_empty() {
        return Err(schema(*header_line, "no data columns".into()));
    }
    for (j, c) in columns.iter().enumerate() {
        if c.is_empty() {
            return Err(schema(*header_line, format!("column {} has an empty name", j + 1 + offset)));
        }
        if columns[..j].contains(c) {
            return Err(schema(*header_line, format!("duplicate column name '{c}'")));
        }
    }
    if body.len() < 2 {
        return Err(CliError::Input {
            source_name: source_name.into(),
            message: format!("need at least 2 data rows, found {}", body.len()),
        });
    }

    let p = columns.len();
    let mut cells: Vec<Option<f64>> = Vec::with_capacity(body.len() * p);
    let mut dates = dated.then(Vec::new);
    let mut incomplete = vec![None; p];
    for (line, rec) in body {
        if let Some(d) = dates.as_mut() {
            let s = rec.get(0).unwrap_or("");
            if !is_iso_date(s) {
                return Err(schema(*line, format!("'{s}' is not an ISO-8601 date")));
            }
            d.push(s.to_string());
        }
        for (j, cell) in rec.iter().skip(offset).enumerate() {
            if MISSING.contains(&cell) {
                incomplete[j].get_or_insert(*line);
                cells.push(None);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => cells.push(Some(v)),
                _ => {
                    return Err(schema(
                        *line,
                        format!("non-numeric value '{cell}' in column '{}'", columns[j]),
                    ))
                }
            }
        }
    }
    if !opts.drop_incomplete {
        if let Some((j, line)) = incomplete
            .iter()
            .enumerate()
            .filter_map(|(j, l)| l.map(|l| (j, l)))
            .min_by_key(|&(_, l)| l)
        {
            return Err(schema(
                line,
                format!(
                    "missing value in column '{}' (use --drop-incomplete to drop such columns)",
                    columns[j]
                ),
            ));
        }
    }
    let keep: Vec<usize> = (0..p).filter(|&j| incomplete[j].is_none()).collect();
    if keep.is_empty() {
        return Err(CliError::Input {
            source_name: source_name.into(),
            message: "every column has missing values".into(),
        });
    }
    let t = body.len();
    let data = DMatrix::from_fn(t, keep.len(), |i, j| cells[i * p + keep[j]].expect("complete column"));
    Ok(Table {
        data,
        columns: keep.iter().map(|&j| columns[j].clone()).collect(),
        dates,
        dropped: (0..p).filter(|j| incomplete[*j].is_some()).map(|j| columns[j].clone()).collect(),
    })
}

/// Returns panel from a file of returns, or of prices when `prices` is set.
pub fn ingest_returns(path: &Path, opts: IngestOptions, prices: bool) -> Result<(ReturnsPanel, Vec<String>)> {
    let table = read_table(path, opts)?;
    panel_from_table(table, prices, &path.display().to_string())
}

pub fn panel_from_table(table: Table, prices: bool, source_name: &str) -> Result<(ReturnsPanel, Vec<String>)> {
    let wrap = |e: shrinkcov::Error| CliError::Input {
        source_name: source_name.into(),
        message: e.to_string(),
    };
    let panel = if prices {
        net_returns(&table.data, table.columns, table.dates).map_err(wrap)?
    } else {
        ReturnsPanel::new(table.data, table.columns, table.dates).map_err(wrap)?
    };
    Ok((panel, table.dropped))
}
