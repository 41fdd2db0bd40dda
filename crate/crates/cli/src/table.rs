//! CSV input and output.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const LABEL_COLUMN: &str = "label";

/// Feature rows with optional labels, read from a headed CSV file.
pub struct Table {
    pub features: Vec<String>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Option<Vec<u8>>,
}

pub fn read(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = r.headers()?.clone();
    let label_at = headers.iter().position(|h| h.trim() == LABEL_COLUMN);
    let features: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_at)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record.with_context(|| format!("{}: bad row {}", path.display(), row + 1))?;
        let mut x = Vec::with_capacity(features.len());
        for (i, field) in record.iter().enumerate() {
            let field = field.trim();
            if Some(i) == label_at {
                ys.push(match field {
                    "0" => 0,
                    "1" => 1,
                    _ => bail!("{}: row {}: label must be 0 or 1, got '{field}'", path.display(), row + 1),
                });
            } else {
                x.push(field.parse::<f64>().with_context(|| {
                    format!("{}: row {}: '{field}' is not a number", path.display(), row + 1)
                })?);
            }
        }
        xs.push(x);
    }
    Ok(Table {
        features,
        xs,
        ys: label_at.map(|_| ys),
    })
}

impl Table {
    pub fn labels(&self, path: &Path) -> Result<&[u8]> {
        match &self.ys {
            Some(ys) => Ok(ys),
            None => bail!("{}: missing '{LABEL_COLUMN}' column", path.display()),
        }
    }
}

/// CSV writer to a file, or to stdout when `path` is `None`.
pub fn writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}
