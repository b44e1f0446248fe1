//! One arm per value of the LRD keep probability `p` or the standard-dropout
//! retention `p_sd`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use lrdrop::stats::Summary;

use crate::classify::{load_data, log_record, run_arms, write_records, RunRecord};
use crate::error::{HarnessError, Result};
use crate::io::{write_atomic, write_csv};
use crate::spec::{Arm, ExperimentSpec, Problem};

pub const SUMMARY_HEADER: &str = "param_value,mean_test_acc,std_test_acc,n_seeds";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// LRD keep probability.
    KeepProb,
    /// Standard-dropout retention.
    StandardDropout,
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "p" => Ok(Self::KeepProb),
            "p_sd" => Ok(Self::StandardDropout),
            _ => Err(format!("unknown sweep parameter {s:?}, expected p or p_sd")),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::KeepProb => "p",
            Self::StandardDropout => "p_sd",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param_value: f64,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
    pub n_seeds: usize,
}

pub fn sweep_arms(spec: &ExperimentSpec, param: SweepParam, values: &[f64]) -> Result<Vec<Arm>> {
    let mut problems = Vec::new();
    if values.is_empty() {
        problems.push("values: must list at least one value".to_string());
    }
    for &v in values {
        if !(v > 0.0 && v <= 1.0) {
            problems.push(format!("values: {v} is outside (0, 1]"));
        }
    }
    if spec.problem == Problem::Toy {
        problems.push("problem: sweeps need a classification problem".into());
    }
    if !problems.is_empty() {
        return Err(HarnessError::Invalid(problems));
    }
    values
        .iter()
        .map(|&v| {
            let token = match param {
                SweepParam::KeepProb => "lrd",
                SweepParam::StandardDropout => "sd",
            };
            let mut arm = spec.parse_arm(token).map_err(|e| HarnessError::Invalid(vec![e]))?;
            match param {
                SweepParam::KeepProb => arm.keep_prob = v,
                SweepParam::StandardDropout => arm.standard_dropout = Some(v),
            }
            arm.param_value = Some(v);
            Ok(arm)
        })
        .collect()
}

/// Mean and sample standard deviation of the final test accuracy per value.
pub fn summarize(records: &[RunRecord]) -> Vec<SweepRow> {
    let mut values: Vec<f64> = Vec::new();
    for r in records {
        if let Some(v) = r.param_value {
            if !values.contains(&v) {
                values.push(v);
            }
        }
    }
    values
        .into_iter()
        .map(|v| {
            let accs: Vec<f64> = records
                .iter()
                .filter(|r| r.param_value == Some(v))
                .map(RunRecord::final_test_acc)
                .collect();
            let s = Summary::of(&accs).expect("at least one seed per value");
            SweepRow {
                param_value: v,
                mean_test_acc: s.mean,
                std_test_acc: s.std,
                n_seeds: s.count,
            }
        })
        .collect()
}

/// Runs the sweep and writes the per-run curves, `summary.csv` and
/// `sweep_summary.csv` under `out`.
pub fn run_sweep(spec: &ExperimentSpec, param: SweepParam, values: &[f64], out: &Path) -> Result<Vec<SweepRow>> {
    let arms = sweep_arms(spec, param, values)?;
    let data = load_data(spec)?;
    let records = run_arms(spec, &arms, &data, log_record)?;
    write_records(out, &records)?;
    let rows = summarize(&records);
    write_csv(
        &out.join("sweep_summary.csv"),
        SUMMARY_HEADER,
        rows.iter()
            .map(|r| format!("{},{},{},{}", r.param_value, r.mean_test_acc, r.std_test_acc, r.n_seeds)),
    )?;
    write_atomic(&out.join("spec.json"), spec.to_json().as_bytes())?;
    Ok(rows)
}
