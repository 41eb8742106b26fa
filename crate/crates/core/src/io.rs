//! CSV data tables.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Numeric columns addressed by header name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Dimension {
                context: "table columns",
                expected: names.len(),
                got: columns.len(),
            });
        }
        let n = columns.first().map_or(0, |c| c.len());
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::Dimension {
                context: "table rows",
                expected: n,
                got: c.len(),
            });
        }
        Ok(Table { names, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    /// Like [`Table::column`] but reports the missing name.
    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name).ok_or_else(|| {
            Error::InvalidModel(format!(
                "data has no column `{name}` (found: {})",
                self.names.join(", ")
            ))
        })
    }

    /// Row-major rows.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|i| self.columns.iter().map(|c| c[i]).collect()).collect()
    }
}

fn data_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Data {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads a headed CSV of numeric columns. Errors carry 1-based line numbers.
pub fn read_csv(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(data_err(path, 1, "missing header row"));
    }
    if header.iter().any(|h| h.parse::<f64>().is_ok()) {
        return Err(data_err(path, 1, "missing header row (first line is numeric)"));
    }
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                let msg = match e.kind() {
                    csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                        format!("ragged row: expected {expected_len} fields, found {len}")
                    }
                    _ => e.to_string(),
                };
                return Err(data_err(path, line, msg));
            }
        };
        let line = rec.position().map_or(0, |p| p.line() as usize);
        for (j, cell) in rec.iter().enumerate() {
            let v = cell.parse::<f64>().map_err(|_| {
                data_err(path, line, format!("non-numeric value `{cell}` in column `{}`", names[j]))
            })?;
            columns[j].push(v);
        }
    }
    Ok(Table { names, columns })
}

/// Writes a table; values use the shortest representation that parses back
/// to the same bits.
pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    write_rows(path, &table.names, &table.rows())
}

pub fn write_rows(path: &Path, names: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(File::create(path)?));
    w.write_record(names)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a diagnostics summary.
pub fn write_summary(path: &Path, rows: &[crate::diagnostics::SummaryRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "name,mean,sd,rhat,ess,ess_per_second")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.name, r.mean, r.sd, r.rhat, r.ess, r.ess_per_second
        )?;
    }
    f.flush()?;
    Ok(())
}
