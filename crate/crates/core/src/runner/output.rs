use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{AngleSweepReport, OutputFormat};
use crate::error::Result;

/// Headed CSV, one row per record. Missing values are empty fields.
pub fn write_csv<R: Serialize>(rows: &[R], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline. Missing values are `null`.
pub fn write_json<S: Serialize + ?Sized>(doc: &S, mut w: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Writes `rows` to `path`, or to stdout when no path is given.
pub fn emit_table<R: Serialize>(rows: &[R], format: OutputFormat, path: Option<&Path>) -> Result<()> {
    let w = open(path)?;
    match format {
        OutputFormat::Csv => write_csv(rows, w),
        OutputFormat::Json => write_json(rows, w),
    }
}

/// `runs/sweep.csv` → `runs/sweep.fits.csv`.
pub fn fits_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.fits.csv"))
}

/// CSV puts the points in `path` and the fits in its `.fits.csv` sibling
/// (on stdout, the fits follow the points after a blank line). JSON writes
/// one document holding both.
pub fn emit_angle_sweep(report: &AngleSweepReport, format: OutputFormat, path: Option<&Path>) -> Result<()> {
    match (format, path) {
        (OutputFormat::Json, _) => write_json(report, open(path)?),
        (OutputFormat::Csv, Some(p)) => {
            write_csv(&report.points, open(Some(p))?)?;
            write_csv(&report.fits, open(Some(&fits_path(p)))?)
        }
        (OutputFormat::Csv, None) => {
            let mut w = open(None)?;
            write_csv(&report.points, &mut w)?;
            writeln!(w)?;
            write_csv(&report.fits, &mut w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: f64,
        b: Option<f64>,
    }

    #[test]
    fn csv_leaves_missing_values_empty() {
        let mut buf = Vec::new();
        write_csv(&[Row { a: 0.5, b: None }, Row { a: 1.0, b: Some(2.0) }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n0.5,\n1.0,2.0\n");
    }

    #[test]
    fn sibling_name() {
        assert_eq!(fits_path(Path::new("out/sweep.csv")), PathBuf::from("out/sweep.fits.csv"));
        assert_eq!(fits_path(Path::new("sweep")), PathBuf::from("sweep.fits.csv"));
    }
}
