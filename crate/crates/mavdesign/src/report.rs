//! CSV reports. Comma delimiter, LF line endings, shortest round-trip decimals.

use std::fs;
use std::path::{Path, PathBuf};

use mavdesign_core::{ComparisonRow, Design, SensitivityReport};

use crate::error::{Error, Result};
use crate::simulation::MseRow;

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn render<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// `x,d_pi` over the verification grid (uniform grid merged with the support).
pub fn sensitivity_csv(report: &SensitivityReport) -> String {
    render(
        &["x", "d_pi"],
        report
            .grid
            .iter()
            .zip(&report.d_values)
            .map(|(&x, &d)| [num(x), num(d)]),
    )
}

/// `design,phi,efficiency,error`; failed rows leave the numbers empty.
pub fn comparison_csv(names: &[String], rows: &[ComparisonRow]) -> String {
    render(
        &["design", "phi", "efficiency", "error"],
        rows.iter().map(|r| {
            let name = names[r.index].clone();
            match &r.phi {
                Ok(phi) => [name, num(*phi), num(r.efficiency.unwrap_or(f64::NAN)), String::new()],
                Err(e) => [name, String::new(), String::new(), e.to_string()],
            }
        }),
    )
}

/// `design,method,truth_id,reps,mse,n_invalid`.
pub fn mse_csv(rows: &[MseRow]) -> String {
    render(
        &["design", "method", "truth_id", "reps", "mse", "n_invalid"],
        rows.iter().map(|r| {
            [
                r.design.clone(),
                r.method.name().to_string(),
                r.truth_id.clone(),
                r.reps.to_string(),
                num(r.mse),
                r.n_invalid.to_string(),
            ]
        }),
    )
}

/// `x,weight,count`.
pub fn rounding_csv(design: &Design, counts: &[usize]) -> String {
    render(
        &["x", "weight", "count"],
        design
            .iter()
            .zip(counts)
            .map(|((x, w), c)| [num(x), num(w), c.to_string()]),
    )
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<PathBuf> {
    let path = path.as_ref();
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}
