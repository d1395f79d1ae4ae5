//! CSV and JSON artefacts of a batch.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::batch::PolicyBatch;
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub const METRICS_HEADER: [&str; 12] = [
    "run",
    "step",
    "policy",
    "gospa_sq",
    "loc_sq",
    "missed_sq",
    "false_sq",
    "r",
    "sensor_x",
    "sensor_y",
    "truth_present",
    "est_present",
];

/// Per-step metrics of every run. Contains no timing, so identical inputs
/// give identical bytes.
pub fn write_metrics_csv<W: Write>(out: W, batches: &[PolicyBatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for b in batches {
        for run in &b.runs {
            for s in &run.steps {
                w.write_record([
                    run.run.to_string(),
                    s.step.to_string(),
                    b.policy.clone(),
                    s.gospa.total_sq.to_string(),
                    s.gospa.loc_sq.to_string(),
                    s.gospa.missed_sq.to_string(),
                    s.gospa.false_sq.to_string(),
                    s.r.to_string(),
                    s.sensor[0].to_string(),
                    s.sensor[1].to_string(),
                    u8::from(s.truth.is_some()).to_string(),
                    u8::from(s.estimate.is_some()).to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// RMS-GOSPA per step and policy, decomposed.
pub fn write_series_csv<W: Write>(out: W, batches: &[PolicyBatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "step", "rms_gospa", "rms_loc", "rms_missed", "rms_false"])
        .map_err(csv_err)?;
    for b in batches {
        for k in 0..b.rms.per_step.len() {
            w.write_record([
                b.policy.clone(),
                (k + 1).to_string(),
                b.rms.per_step[k].to_string(),
                b.rms.per_step_loc[k].to_string(),
                b.rms.per_step_missed[k].to_string(),
                b.rms.per_step_false[k].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub runs: usize,
    pub steps: usize,
    pub rms_gospa: f64,
    pub rms_loc: f64,
    pub rms_missed: f64,
    pub rms_false: f64,
    pub rms_after_trap: Option<f64>,
    pub mean_step_seconds: f64,
    pub mean_plan_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policies: Vec<PolicySummary>,
}

pub fn summarise(batches: &[PolicyBatch]) -> Summary {
    Summary {
        policies: batches
            .iter()
            .map(|b| PolicySummary {
                policy: b.policy.clone(),
                runs: b.runs.len(),
                steps: b.rms.per_step.len(),
                rms_gospa: b.rms.overall,
                rms_loc: b.rms.overall_loc,
                rms_missed: b.rms.overall_missed,
                rms_false: b.rms.overall_false,
                rms_after_trap: b.rms_after_trap,
                mean_step_seconds: b.mean_step_seconds,
                mean_plan_seconds: b.mean_plan_seconds,
            })
            .collect(),
    }
}

/// One row per policy: overall and decomposed RMS-GOSPA and timing.
pub fn write_comparison_csv<W: Write>(out: W, summary: &Summary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "rms_gospa",
        "rms_loc",
        "rms_missed",
        "rms_false",
        "rms_after_trap",
        "mean_step_seconds",
    ])
    .map_err(csv_err)?;
    for p in &summary.policies {
        w.write_record([
            p.policy.clone(),
            p.rms_gospa.to_string(),
            p.rms_loc.to_string(),
            p.rms_missed.to_string(),
            p.rms_false.to_string(),
            p.rms_after_trap.map(|v| v.to_string()).unwrap_or_default(),
            p.mean_step_seconds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `metrics.csv`, `summary.json` and `series.csv` into `dir`, plus
/// `comparison.csv` when `comparison` is set.
pub fn write_outputs(dir: &Path, batches: &[PolicyBatch], comparison: bool) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    write_metrics_csv(fs::File::create(dir.join("metrics.csv"))?, batches)?;
    write_series_csv(fs::File::create(dir.join("series.csv"))?, batches)?;
    let summary = summarise(batches);
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    if comparison {
        write_comparison_csv(fs::File::create(dir.join("comparison.csv"))?, &summary)?;
    }
    Ok(summary)
}
