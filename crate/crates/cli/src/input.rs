//! Numeric CSV matrices: one observation per row, one feature per column.

use std::path::Path;

use crate::error::CliError;

/// Reads a numeric matrix, skipping the first row when `header` is set.
/// Line numbers in errors are 1-based lines of the file.
pub fn read_matrix(path: &Path, header: bool) -> Result<Vec<Vec<f64>>, CliError> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(&shown, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line());
            CliError::parse(&shown, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::parse(
                    &shown,
                    Some(line),
                    format!("column {}: {field:?} is not a number", col + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(CliError::parse(
                    &shown,
                    Some(line),
                    format!("column {}: non-finite value {field:?}", col + 1),
                ));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::parse(
                    &shown,
                    Some(line),
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::parse(&shown, None, "no observations".into()));
    }
    Ok(rows)
}
