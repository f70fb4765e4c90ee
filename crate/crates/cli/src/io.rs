//! Series input and small output helpers.

use std::fs;
use std::io::{self, Read};
use std::path::Path;

use anyhow::{anyhow, Context};

use crate::Failure;

/// Reads one value per line, or one column of a CSV file when `column` is
/// set (by header name or 0-based position). A non-numeric first line is
/// taken as a header and skipped.
pub fn read_series(path: &Path, column: Option<&str>) -> Result<Vec<f64>, Failure> {
    let text = read_input(path)?;
    let values = match column {
        None => parse_lines(&text)?,
        Some(col) => parse_column(&text, col)?,
    };
    if values.is_empty() {
        return Err(Failure::Usage(anyhow!("{}: no samples", path.display())));
    }
    Ok(values)
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .context("reading stdin")
            .map_err(Failure::Runtime)?;
        return Ok(s);
    }
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Runtime)
}

fn parse_lines(text: &str) -> Result<Vec<f64>, Failure> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ if i == 0 => continue,
            _ => {
                return Err(Failure::Usage(anyhow!(
                    "line {}: cannot parse `{line}` as a number",
                    i + 1
                )))
            }
        }
    }
    Ok(values)
}

fn parse_column(text: &str, column: &str) -> Result<Vec<f64>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Failure::Usage(anyhow!("reading CSV header: {e}")))?
        .clone();
    let index = headers
        .iter()
        .position(|h| h == column)
        .or_else(|| column.parse::<usize>().ok().filter(|&i| i < headers.len()))
        .ok_or_else(|| Failure::Usage(anyhow!("no column `{column}` in CSV header")))?;

    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Failure::Usage(anyhow!("line {line}: {e}")))?;
        let field = record.get(index).unwrap_or("");
        let v: f64 = field
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| {
                Failure::Usage(anyhow!("line {line}: cannot parse `{field}` as a number"))
            })?;
        values.push(v);
    }
    Ok(values)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Runtime)
}
