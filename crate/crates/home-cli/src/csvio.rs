//! CSV import and export.
//!
//! Datasets use the header `label,feature_1,...,feature_P` with one sample
//! per row. Moment reports use `order,indices,views,moment` where `indices`
//! and `views` are colon-joined and 1-based. Floats are written in Rust's
//! shortest round-trip form, so files reread to the exact same values.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use home_core::matrix::Mat;
use home_core::moments::MomentReport;

fn bad(message: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, message.into())
}

pub fn write_dataset(path: &Path, samples: &Mat, labels: &[usize]) -> io::Result<()> {
    if samples.rows() != labels.len() {
        return Err(bad(format!(
            "{} samples but {} labels",
            samples.rows(),
            labels.len()
        )));
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "label")?;
    for p in 1..=samples.cols() {
        write!(out, ",feature_{p}")?;
    }
    writeln!(out)?;
    for (r, &label) in labels.iter().enumerate() {
        write!(out, "{label}")?;
        for v in samples.row(r) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

/// Reads a dataset CSV back into a sample matrix and labels. Every row must
/// match the header's column count and every feature must parse to a finite
/// float.
pub fn read_dataset(path: &Path) -> io::Result<(Mat, Vec<usize>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty CSV"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"label") || columns.len() < 2 {
        return Err(bad(format!("bad header {header:?}, expected label,feature_1,...")));
    }
    let feature_dim = columns.len() - 1;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != feature_dim + 1 {
            return Err(bad(format!(
                "row {}: {} fields, expected {}",
                i + 2,
                fields.len(),
                feature_dim + 1
            )));
        }
        let label: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {}: bad label {:?}", i + 2, fields[0])))?;
        labels.push(label);
        for field in &fields[1..] {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: bad value {field:?}", i + 2)))?;
            if !v.is_finite() {
                return Err(bad(format!("row {}: non-finite value {field:?}", i + 2)));
            }
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(bad("CSV has a header but no rows"));
    }
    let samples = Mat::from_vec(labels.len(), feature_dim, data).map_err(|e| bad(e.to_string()))?;
    Ok((samples, labels))
}

fn one_based(ids: &[usize]) -> String {
    ids.iter()
        .map(|&i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join(":")
}

pub fn write_moments(path: &Path, report: &MomentReport) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "order,indices,views,moment")?;
    for entry in &report.entries {
        writeln!(
            out,
            "{},{},{},{}",
            entry.order(),
            one_based(entry.indices.indices()),
            one_based(&entry.views),
            entry.value
        )?;
    }
    out.flush()
}
