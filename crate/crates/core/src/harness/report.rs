//! CSV and JSON emission for runs and sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Report, SweepTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

const COLUMNS: [&str; 12] = [
    "config_hash",
    "axis",
    "axis_value",
    "accuracy",
    "theoretical_speedup",
    "measured_speedup",
    "pairs_base",
    "pairs_multi",
    "wall_ms_base",
    "wall_ms_t3s",
    "fallback_serial",
    "error",
];

pub fn csv_header() -> String {
    COLUMNS.join(",")
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Commas, quotes and newlines are replaced so every row keeps its shape.
fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            ',' | '\n' | '\r' => ';',
            '"' => '\'',
            c => c,
        })
        .collect()
}

/// One CSV line. A missing report leaves the metric columns empty.
pub fn csv_row(
    config_hash: &str,
    axis: &str,
    axis_value: &str,
    report: Option<&Report>,
    error: Option<&str>,
) -> String {
    let metrics = match report {
        Some(r) => {
            let c = &r.cost;
            vec![
                r.accuracy.to_string(),
                c.theoretical_speedup.to_string(),
                opt(c.measured_speedup),
                c.measured_pairs_base.to_string(),
                c.measured_pairs_multi.to_string(),
                opt(c.tau1.map(|t| t * 1e3)),
                opt(c.tau2.map(|t| t * 1e3)),
                c.fallback_serial.to_string(),
            ]
        }
        None => vec![String::new(); 8],
    };
    let mut cells = vec![sanitize(config_hash), sanitize(axis), sanitize(axis_value)];
    cells.extend(metrics);
    cells.push(sanitize(error.unwrap_or("")));
    cells.join(",")
}

pub trait Tabular {
    fn csv(&self) -> String;
}

impl Tabular for Report {
    fn csv(&self) -> String {
        format!(
            "{}\n{}\n",
            csv_header(),
            csv_row(&self.config_hash, "none", "", Some(self), None)
        )
    }
}

impl Tabular for SweepTable {
    fn csv(&self) -> String {
        let mut out = csv_header();
        out.push('\n');
        for row in &self.rows {
            out.push_str(&csv_row(
                &row.config_hash,
                &self.axis,
                &row.label,
                row.report.as_ref(),
                row.error.as_deref(),
            ));
            out.push('\n');
        }
        out
    }
}

/// Writes `<stem>.json` or `<stem>.csv` into `dir` and returns the path.
pub fn write_outputs<T: Serialize + Tabular>(
    value: &T,
    dir: &Path,
    stem: &str,
    format: OutputFormat,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (path, body) = match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(value)?;
            s.push('\n');
            (dir.join(format!("{stem}.json")), s)
        }
        OutputFormat::Csv => (dir.join(format!("{stem}.csv")), value.csv()),
    };
    fs::write(&path, body)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_match_header_width() {
        let row = csv_row("abc", "k_values", "2", None, Some("bad, \"k\"\nvalue"));
        assert_eq!(row.split(',').count(), COLUMNS.len());
        assert!(row.ends_with("bad; 'k';value"));
        assert_eq!(csv_header().split(',').count(), COLUMNS.len());
    }

    #[test]
    fn format_parsing() {
        assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert!(matches!(
            "xml".parse::<OutputFormat>(),
            Err(Error::Config(_))
        ));
    }
}
