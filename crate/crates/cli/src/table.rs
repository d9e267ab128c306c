//! Header-first CSV tables with located parse errors.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// Raw cells of a CSV file; numeric parsing happens per selected column so
/// unused text columns (ids, labels) are allowed.
pub struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let display = path.display();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::malformed(format!("{display}: {e}")))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::malformed(format!("{display}: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(CliError::malformed(format!(
                "{display}: missing header row"
            )));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| CliError::malformed(format!("{display}: {e}")))?;
            let line = record.position().map_or(0, |p| p.line());
            rows.push((line, record.iter().map(str::to_string).collect()));
        }
        if rows.is_empty() {
            return Err(CliError::malformed(format!("{display}: no data rows")));
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    fn column_list(&self) -> String {
        self.headers.join(", ")
    }

    /// Resolves a header name or 1-based index to a 0-based column.
    pub fn resolve(&self, key: &str) -> CliResult<usize> {
        let key = key.trim();
        if let Some(i) = self.headers.iter().position(|h| h == key) {
            return Ok(i);
        }
        if let Ok(k) = key.parse::<usize>() {
            if (1..=self.headers.len()).contains(&k) {
                return Ok(k - 1);
            }
            return Err(CliError::malformed(format!(
                "{}: column {k} out of range (file has {} columns)",
                self.path.display(),
                self.headers.len()
            )));
        }
        Err(CliError::malformed(format!(
            "{}: column '{key}' not found (columns: {})",
            self.path.display(),
            self.column_list()
        )))
    }

    /// Parses a selection such as `1-8`, `2,4,7` or `a,b,c`.
    pub fn resolve_list(&self, spec: &str) -> CliResult<Vec<usize>> {
        let mut out = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let range = item.split_once('-').and_then(|(a, b)| {
                Some((
                    a.trim().parse::<usize>().ok()?,
                    b.trim().parse::<usize>().ok()?,
                ))
            });
            match range {
                Some((a, b)) if self.headers.iter().all(|h| h != item) => {
                    if a > b {
                        return Err(CliError::malformed(format!("empty column range '{item}'")));
                    }
                    for k in a..=b {
                        out.push(self.resolve(&k.to_string())?);
                    }
                }
                _ => out.push(self.resolve(item)?),
            }
        }
        if out.is_empty() {
            return Err(CliError::malformed(format!(
                "no columns selected by '{spec}'"
            )));
        }
        let mut seen = out.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != out.len() {
            return Err(CliError::malformed(format!(
                "column selected twice in '{spec}'"
            )));
        }
        Ok(out)
    }

    /// Numeric values of column `col`, one per row.
    pub fn numeric_column(&self, col: usize) -> CliResult<Vec<f64>> {
        let name = &self.headers[col];
        self.rows
            .iter()
            .map(|(line, cells)| {
                let cell = cells.get(col).map(String::as_str).unwrap_or("");
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(CliError::malformed(format!(
                        "{}:{line}: column '{name}': expected a finite number, got '{cell}'",
                        self.path.display()
                    ))),
                }
            })
            .collect()
    }

    /// Rows × selected columns as a matrix.
    pub fn matrix(&self, cols: &[usize]) -> CliResult<DMatrix<f64>> {
        let columns = cols
            .iter()
            .map(|&c| self.numeric_column(c))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.len(), cols.len(), |r, c| {
            columns[c][r]
        }))
    }
}
