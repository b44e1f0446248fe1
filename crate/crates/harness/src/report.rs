//! Aggregates finished classification runs into one row per arm.

use std::fs;
use std::path::Path;

use lrdrop::stats::Summary;

use crate::classify::EPOCH_HEADER;
use crate::error::{HarnessError, Result};
use crate::io::write_csv;

pub const REPORT_HEADER: &str = "arm,n_seeds,mean_final_test_acc,std_final_test_acc";

#[derive(Debug, Clone, PartialEq)]
pub struct ArmReport {
    pub arm: String,
    pub n_seeds: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

/// Final test accuracy (last row) of a per-seed learning-curve CSV.
fn final_test_acc(path: &Path) -> Result<f64> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(EPOCH_HEADER) {
        return Err(HarnessError::Other(format!(
            "{}: expected header {EPOCH_HEADER}",
            path.display()
        )));
    }
    let last = lines
        .last()
        .ok_or_else(|| HarnessError::Other(format!("{}: no rows", path.display())))?;
    last.rsplit(',')
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| HarnessError::Other(format!("{}: malformed row {last:?}", path.display())))
}

/// Scans `<dir>/<run>/seed-*.csv`, sorted by run directory name.
pub fn collect(dir: &Path) -> Result<Vec<ArmReport>> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut runs: Vec<_> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    runs.sort();
    let mut reports = Vec::new();
    for run in runs {
        let mut seeds: Vec<_> = fs::read_dir(&run)
            .map_err(|e| HarnessError::io(&run, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension().is_some_and(|x| x == "csv")
                    && p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("seed-"))
            })
            .collect();
        if seeds.is_empty() {
            continue;
        }
        seeds.sort();
        let accs = seeds.iter().map(|p| final_test_acc(p)).collect::<Result<Vec<_>>>()?;
        let s = Summary::of(&accs).expect("non-empty");
        reports.push(ArmReport {
            arm: run.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(),
            n_seeds: s.count,
            mean: s.mean,
            std: s.std,
        });
    }
    if reports.is_empty() {
        return Err(HarnessError::Other(format!(
            "{}: no <run>/seed-*.csv learning curves found",
            dir.display()
        )));
    }
    Ok(reports)
}

/// Writes `<dir>/report.csv` and returns its rows.
pub fn report(dir: &Path) -> Result<Vec<ArmReport>> {
    let reports = collect(dir)?;
    write_csv(
        &dir.join("report.csv"),
        REPORT_HEADER,
        reports
            .iter()
            .map(|r| format!("{},{},{},{}", r.arm, r.n_seeds, r.mean, r.std)),
    )?;
    Ok(reports)
}
