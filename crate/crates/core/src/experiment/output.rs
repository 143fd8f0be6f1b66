//! Artifact files: energy CSVs, plain-text field dumps, JSON summaries.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::EnergyReport;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

pub const SUMMARY_FILE: &str = "run_summary.json";

pub fn energy_csv_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("energy_{index:04}.csv"))
}

pub fn field_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("field_final_{index:04}.txt"))
}

/// Header row then one row per report, floats in `{:.16e}`.
pub fn write_energy_csv(path: &Path, reports: &[EnergyReport]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", EnergyReport::CSV_HEADER)?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a CSV written by [`write_energy_csv`] into rows of floats.
pub fn read_energy_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != EnergyReport::CSV_HEADER {
        return Err(Error::InvalidInput(format!("unexpected CSV header `{header}`")));
    }
    lines
        .map(|line| {
            line?
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidInput(format!("CSV value `{s}`: {e}"))))
                .collect()
        })
        .collect()
}

/// Header `dim N h`, then rows of `N` values along axis 0, 17 significant digits.
pub fn write_field(path: &Path, u: &ScalarField<f64>) -> Result<()> {
    let g = u.grid();
    let n = g.points_per_axis();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {} {:.16e}", g.dim(), n, g.spacing::<f64>())?;
    for row in u.values().chunks(n) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField<f64>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |what: &str| Error::InvalidInput(format!("{}: {what}", path.display()));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file"))?.split_whitespace().collect();
    let [dim, n, _h] = header[..] else {
        return Err(bad("header must be `dim N h`"));
    };
    let dim: usize = dim.parse().map_err(|_| bad("bad dim"))?;
    let n: usize = n.parse().map_err(|_| bad("bad N"))?;
    let grid = GridSpec::new(dim, n)?;
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|s| s.parse::<f64>().map_err(|_| bad("bad value")))
        .collect::<Result<Vec<_>>>()?;
    ScalarField::new(grid, values)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Rows `t = k·stride` plus the final sample.
pub fn strided(reports: &[EnergyReport], stride: usize) -> Vec<EnergyReport> {
    let stride = stride.max(1);
    let mut rows: Vec<EnergyReport> = reports.iter().step_by(stride).copied().collect();
    if !(reports.len() - 1).is_multiple_of(stride) {
        rows.extend(reports.last().copied());
    }
    rows
}
