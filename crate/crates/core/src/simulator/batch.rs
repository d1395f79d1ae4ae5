//! Monte Carlo batches and their aggregates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::episode::{run_episode, RunMetrics};
use crate::error::{Error, Result};
use crate::gospa_metric::{rms_gospa, RmsGospa};
use crate::planners::Policy;

/// All runs of one policy plus aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBatch {
    pub policy: String,
    pub runs: Vec<RunMetrics>,
    pub rms: RmsGospa,
    /// RMS-GOSPA over the steps after `trap_step`, when configured.
    pub rms_after_trap: Option<f64>,
    pub mean_step_seconds: f64,
    pub mean_plan_seconds: f64,
}

fn aggregate(cfg: &ScenarioConfig, runs: Vec<RunMetrics>) -> Result<PolicyBatch> {
    let series: Vec<_> = runs.iter().map(|r| r.gospa_series()).collect();
    let rms = rms_gospa(&series)?;
    let rms_after_trap = match cfg.trap_step {
        Some(t) if t < cfg.duration => {
            let tail: Vec<f64> = runs
                .iter()
                .flat_map(|r| r.steps.iter().filter(|s| s.step > t).map(|s| s.gospa.total_sq))
                .collect();
            Some((tail.iter().sum::<f64>() / tail.len() as f64).sqrt())
        }
        _ => None,
    };
    let n = runs.iter().map(|r| r.steps.len()).sum::<usize>() as f64;
    let mean = |f: fn(&super::episode::StepRecord) -> f64| {
        runs.iter().flat_map(|r| r.steps.iter().map(f)).sum::<f64>() / n
    };
    Ok(PolicyBatch {
        policy: cfg.policy.label(),
        mean_step_seconds: mean(|s| s.step_seconds),
        mean_plan_seconds: mean(|s| s.plan_seconds),
        runs,
        rms,
        rms_after_trap,
    })
}

/// Runs `cfg.mc_runs` episodes of the configured policy, in parallel on
/// `threads` workers (the global pool when `None`). Results are in run order
/// whatever the thread count.
pub fn run_batch(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<PolicyBatch> {
    cfg.validate()?;
    let work = || {
        (0..cfg.mc_runs)
            .into_par_iter()
            .map(|run| run_episode(cfg, run))
            .collect::<Result<Vec<_>>>()
    };
    let runs = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter {
                name: "parallel",
                reason: e.to_string(),
            })?
            .install(work)?,
        None => work()?,
    };
    aggregate(cfg, runs)
}

/// Paired-seed batches, one per policy.
pub fn run_comparison(cfg: &ScenarioConfig, policies: &[Policy], threads: Option<usize>) -> Result<Vec<PolicyBatch>> {
    policies
        .iter()
        .map(|p| {
            let mut c = cfg.clone();
            c.policy = p.clone();
            run_batch(&c, threads)
        })
        .collect()
}
