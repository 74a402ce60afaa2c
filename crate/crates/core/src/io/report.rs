//! Per-trial result rows and the session report.
//!
//! Rows use the columns
//! `trial,target,tpe_cm,tct_total_s,tct_grasp_s,tct_place_s,eversion_s,steering_s,failed,reason`;
//! `tpe_cm` is empty for failed trials and `reason` is empty for successes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::task::{TargetId, TrialResult};

/// TPE histogram bin width (cm).
pub const BIN_WIDTH_CM: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial: usize,
    pub target: TargetId,
    pub tpe_cm: Option<f64>,
    pub tct_total_s: f64,
    pub tct_grasp_s: f64,
    pub tct_place_s: f64,
    pub eversion_s: f64,
    pub steering_s: f64,
    pub failed: bool,
    pub reason: Option<String>,
}

impl ResultRow {
    pub fn new(trial: usize, r: &TrialResult) -> Self {
        Self {
            trial,
            target: r.target,
            tpe_cm: r.tpe_cm,
            tct_total_s: r.tct_total_s,
            tct_grasp_s: r.tct_grasp_s,
            tct_place_s: r.tct_place_s,
            eversion_s: r.eversion_s,
            steering_s: r.steering_s,
            failed: r.failed,
            reason: r.failure_reason.map(|f| f.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo_cm: f64,
    pub hi_cm: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub rows: Vec<ResultRow>,
    pub successes: usize,
    pub failures: usize,
    pub success_rate: f64,
    pub mean_tpe_cm: Option<f64>,
    pub median_tpe_cm: Option<f64>,
    /// Successful placements only.
    pub histogram: Vec<HistogramBin>,
}

impl SessionReport {
    pub fn from_rows(rows: Vec<ResultRow>) -> Result<Self, IoError> {
        if rows.is_empty() {
            return Err(IoError::EmptyReport);
        }
        let mut tpes: Vec<f64> = rows.iter().filter(|r| !r.failed).filter_map(|r| r.tpe_cm).collect();
        let successes = rows.iter().filter(|r| !r.failed).count();
        let failures = rows.len() - successes;
        tpes.sort_by(f64::total_cmp);
        let mean = (!tpes.is_empty()).then(|| tpes.iter().sum::<f64>() / tpes.len() as f64);
        let median = (!tpes.is_empty()).then(|| {
            let n = tpes.len();
            if n % 2 == 1 {
                tpes[n / 2]
            } else {
                0.5 * (tpes[n / 2 - 1] + tpes[n / 2])
            }
        });
        let nbins = tpes
            .last()
            .map_or(0, |max| (max / BIN_WIDTH_CM).floor() as usize + 1);
        let mut histogram: Vec<HistogramBin> = (0..nbins)
            .map(|i| HistogramBin {
                lo_cm: i as f64 * BIN_WIDTH_CM,
                hi_cm: (i + 1) as f64 * BIN_WIDTH_CM,
                count: 0,
            })
            .collect();
        for t in &tpes {
            histogram[(t / BIN_WIDTH_CM).floor() as usize].count += 1;
        }
        Ok(Self {
            successes,
            failures,
            success_rate: successes as f64 / rows.len() as f64,
            mean_tpe_cm: mean,
            median_tpe_cm: median,
            histogram,
            rows,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let mut w = BufWriter::new(File::create(path)?);
        {
            let mut csv = csv::Writer::from_writer(&mut w);
            for r in &self.rows {
                csv.serialize(r)?;
            }
            csv.flush()?;
        }
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        writeln!(w)?;
        writeln!(w, "metric,value")?;
        writeln!(w, "trials,{}", self.rows.len())?;
        writeln!(w, "successes,{}", self.successes)?;
        writeln!(w, "failures,{}", self.failures)?;
        writeln!(w, "success_rate,{:.6}", self.success_rate)?;
        writeln!(w, "mean_tpe_cm,{}", opt(self.mean_tpe_cm))?;
        writeln!(w, "median_tpe_cm,{}", opt(self.median_tpe_cm))?;
        writeln!(w)?;
        writeln!(w, "bin_lo_cm,bin_hi_cm,count")?;
        for b in &self.histogram {
            writeln!(w, "{:.1},{:.1},{}", b.lo_cm, b.hi_cm, b.count)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the report for `results` (numbered from 1) and writes it to `path`.
pub fn emit_report(results: &[TrialResult], path: &Path) -> Result<SessionReport, IoError> {
    let rows = results
        .iter()
        .enumerate()
        .map(|(i, r)| ResultRow::new(i + 1, r))
        .collect();
    let report = SessionReport::from_rows(rows)?;
    report.write(path)?;
    Ok(report)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), IoError> {
    let mut csv = csv::Writer::from_path(path)?;
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads result rows, stopping at the first blank line so a full report
/// file can be read back as well.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, IoError> {
    let text = std::fs::read_to_string(path)?;
    let table: String = text
        .lines()
        .take_while(|l| !l.trim().is_empty())
        .map(|l| format!("{l}\n"))
        .collect();
    let mut rdr = csv::Reader::from_reader(table.as_bytes());
    let rows = rdr.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}
