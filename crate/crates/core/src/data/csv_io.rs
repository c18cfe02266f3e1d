//! `subject,label,<channel...>` CSV, one row per timestep.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{Channel, Dataset};
use crate::error::{Error, Result};

/// Sample rate assigned to CSV input; the format carries no timing metadata.
pub const CSV_SAMPLE_RATE_HZ: f64 = 1.0;

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let format_err = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 3 || &header[0] != "subject" || &header[1] != "label" {
        return Err(format_err(
            "header must be `subject,label,<channel names...>`".into(),
        ));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    if let Some(empty) = names.iter().position(String::is_empty) {
        return Err(format_err(format!("channel column {} has no name", empty + 3)));
    }

    let mut samples = vec![Vec::new(); names.len()];
    let mut labels = Vec::new();
    let mut subjects = Vec::new();
    let mut seen_subjects = HashSet::new();

    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                msg: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        let subject: i64 = parse_cell(&record[0], row, "subject")?;
        let label: i64 = parse_cell(&record[1], row, "label")?;
        if subject < 0 {
            return Err(Error::Parse {
                row,
                msg: format!("negative subject id {subject}"),
            });
        }
        if label < 0 {
            return Err(Error::Parse {
                row,
                msg: format!("negative label {label}"),
            });
        }
        let subject = subject as usize;
        if subjects.last() != Some(&subject) && !seen_subjects.insert(subject) {
            return Err(Error::Parse {
                row,
                msg: format!("rows of subject {subject} are not contiguous"),
            });
        }
        for (c, cell) in record.iter().skip(2).enumerate() {
            let v: f64 = parse_cell(cell, row, &names[c])?;
            samples[c].push(v);
        }
        labels.push(label as usize);
        subjects.push(subject);
    }

    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let channels = names
        .into_iter()
        .zip(samples)
        .map(|(name, samples)| Channel { name, samples })
        .collect();
    Dataset::new(channels, labels, subjects, CSV_SAMPLE_RATE_HZ, num_classes)
}

fn parse_cell<T: std::str::FromStr>(cell: &str, row: usize, column: &str) -> Result<T> {
    cell.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("column `{column}`: cannot parse {cell:?}"),
    })
}

/// Writes `d` in the format read by [`load_csv`]. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header = vec!["subject".to_string(), "label".to_string()];
    header.extend(d.channel_names());
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for t in 0..d.len() {
        line.clear();
        line.push_str(&format!("{},{}", d.subjects()[t], d.labels()[t]));
        for ch in d.channels() {
            line.push(',');
            line.push_str(&format!("{}", ch.samples[t]));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
