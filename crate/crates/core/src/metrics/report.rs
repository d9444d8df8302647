//! Evaluation report: flat metric entries plus FDR correction across tests.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::fdr;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    /// Standard error of the mean where meaningful.
    pub dispersion: Option<f64>,
    pub p: Option<f64>,
    pub p_fdr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<ReportEntry>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn push(&mut self, metric: impl Into<String>, value: f64, n: usize, dispersion: Option<f64>, p: Option<f64>) {
        self.entries.push(ReportEntry {
            metric: metric.into(),
            value,
            n,
            dispersion,
            p,
            p_fdr: None,
        });
    }

    pub fn get(&self, metric: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.metric == metric)
    }

    /// Fills `p_fdr` for every entry carrying a p-value, correcting jointly.
    pub fn correct(&mut self) -> Result<()> {
        let idx: Vec<usize> = (0..self.entries.len()).filter(|&i| self.entries[i].p.is_some()).collect();
        let ps: Vec<f64> = idx.iter().map(|&i| self.entries[i].p.unwrap()).collect();
        for (i, q) in idx.into_iter().zip(fdr(&ps)?) {
            self.entries[i].p_fdr = Some(q);
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Writes any serialisable rows as a CSV table with a header.
pub fn write_table<T: Serialize, W: Write>(w: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_table(std::fs::File::create(path)?, rows)
}
