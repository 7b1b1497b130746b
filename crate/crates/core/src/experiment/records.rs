//! Plot-ready output rows and their CSV/JSON files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{BetaValue, OutputFormat};
use crate::error::{BrotocError, Result};

pub const MEAN_LABEL: &str = "mean";
pub const REFERENCE_LABEL: &str = "reference";
pub const AVERAGE_LABEL: &str = "avg";

/// One output row. Column order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrotocRecord {
    pub model: String,
    #[serde(rename = "L")]
    pub l: u32,
    pub d: usize,
    pub beta: BetaValue,
    /// Evaluation time, or `avg` for long-time averages.
    pub t_or_avg: String,
    pub method: String,
    pub g_disc: f64,
    pub g_reg: f64,
    pub n_value: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Realization index, `mean`, or `reference` for ensemble estimates.
    pub realization: String,
    /// Standard error of `g_reg` over realizations, on `mean` rows.
    pub stderr: Option<f64>,
}

impl BrotocRecord {
    pub fn is_mean(&self) -> bool {
        self.realization == MEAN_LABEL
    }

    fn realization_key(&self) -> (u8, usize) {
        match self.realization.parse::<usize>() {
            Ok(i) => (0, i),
            Err(_) if self.is_mean() => (1, 0),
            Err(_) => (2, 0),
        }
    }
}

/// Sort by model (first appearance), `L`, `β` and realization.
pub fn sort_records(rows: &mut [BrotocRecord]) {
    let mut first: HashMap<String, usize> = HashMap::new();
    for r in rows.iter() {
        let n = first.len();
        first.entry(r.model.clone()).or_insert(n);
    }
    rows.sort_by(|a, b| {
        first[&a.model]
            .cmp(&first[&b.model])
            .then(a.l.cmp(&b.l))
            .then(a.beta.key().total_cmp(&b.beta.key()))
            .then(a.realization_key().cmp(&b.realization_key()))
            .then(a.t_or_avg.cmp(&b.t_or_avg))
    });
}

/// Write rows in deterministic order.
pub fn emit_records(rows: &[BrotocRecord], path: &Path, format: OutputFormat) -> Result<()> {
    if rows.is_empty() {
        return Err(BrotocError::Validation("no rows to write".into()));
    }
    let mut sorted = rows.to_vec();
    sort_records(&mut sorted);
    write_rows(&sorted, path, format)
}

/// Write any serializable rows as CSV or as a JSON array.
pub fn write_rows<T: Serialize>(rows: &[T], path: &Path, format: OutputFormat) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<BrotocRecord>> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    } else {
        let mut r = csv::Reader::from_path(path)?;
        Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
    }
}
