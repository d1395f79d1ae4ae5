use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{child_key, node_key, single_root, Decision, PlanningProblem};
use crate::error::{Error, Result};
use crate::gaussian_bernoulli::{BernoulliDensity, Gaussian};
use crate::rng::SeedKey;
use crate::sensor_models::{Action, Point};

/// Moves to the feasible action closest to the predicted target position.
/// Ties go to the lowest id; without any prediction the first action is used.
pub fn nearest_sensor_plan<P: PlanningProblem + ?Sized>(
    problem: &P,
    root: &BernoulliDensity,
    position: Point,
) -> Result<Decision> {
    let actions = problem.actions(position);
    let first = *actions.first().ok_or(Error::EmptyInput("feasible actions"))?;
    let Some(target) = problem.predicted_position(root) else {
        return Ok(Decision {
            action: first,
            value: f64::NAN,
            evaluations: 0,
        });
    };
    let mut best = (f64::INFINITY, first);
    for a in &actions {
        let d = (a.target_position[0] - target[0]).hypot(a.target_position[1] - target[1]);
        if d < best.0 {
            best = (d, *a);
        }
    }
    Ok(Decision {
        action: best.1,
        value: best.0,
        evaluations: 0,
    })
}

/// Which observation branches enter the information gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// Expectation over detection and misdetection.
    #[default]
    Expected,
    /// Detection branch only, weighted by its probability.
    DetectOnly,
}

fn log_det_psd(m: &DMatrix<f64>) -> f64 {
    match m.clone().cholesky() {
        Some(ch) => ch.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum(),
        None => f64::NEG_INFINITY,
    }
}

/// `a ln(a / b)` with `0 ln 0 = 0`.
fn xlog_ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        a * (a / b).ln()
    }
}

/// Closed-form divergence between a posterior and a predicted Gaussian
/// Bernoulli density.
///
/// The expression is the expectation, under the predicted density, of the
/// log ratio of predicted to posterior density:
/// `(1-r⁻) ln((1-r⁻)/(1-r⁺)) + r⁻ ln(r⁻/r⁺) + r⁻/2 [tr(P⁺⁻¹P⁻) - ln(|P⁻|/|P⁺|) - n + dᵀP⁺⁻¹d]`.
/// With `r⁻ = r⁺ ∈ {0, 1}` the existence terms vanish. A posterior
/// existence of exactly 0 or 1 against a different prediction gives `+∞`.
pub fn bernoulli_gaussian_kl(
    posterior: (f64, &Gaussian),
    predicted: (f64, &Gaussian),
) -> Result<f64> {
    let (r_post, g_post) = posterior;
    let (r_pred, g_pred) = predicted;
    let existence = xlog_ratio(1.0 - r_pred, 1.0 - r_post) + xlog_ratio(r_pred, r_post);
    if r_pred == 0.0 {
        return Ok(existence);
    }
    let n = g_post.dim();
    let chol = g_post
        .cov
        .clone()
        .cholesky()
        .ok_or(Error::Singular("posterior covariance"))?;
    let trace = chol.solve(&g_pred.cov).trace();
    let d = &g_post.mean - &g_pred.mean;
    let maha = d.dot(&chol.solve(&d));
    let log_det_post: f64 = chol.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
    let log_ratio = log_det_psd(&g_pred.cov) - log_det_post;
    Ok(existence + 0.5 * r_pred * (trace - log_ratio - n as f64 + maha))
}

/// Posterior existence used by the KL policy. The detection hypothesis has
/// `r = 1`, which makes the divergence infinite for any uncertain
/// prediction; the value is pulled just inside the open interval.
const KL_EXISTENCE_CLAMP: f64 = 1e-9;

/// Maximises the expected information gain one step ahead.
pub fn kl_plan<P: PlanningProblem + ?Sized>(
    problem: &P,
    root: &BernoulliDensity,
    position: Point,
    mode: KlMode,
    step_key: SeedKey,
) -> Result<Decision> {
    let root = single_root(root);
    let key = node_key(step_key);
    let actions = problem.actions(position);
    let mut best: Option<(f64, Action)> = None;
    for a in &actions {
        let eval = problem.evaluate(&root, a, child_key(key, a))?;
        let pred = &eval.predicted;
        let g_pred = &pred.components[0].gaussian;
        let uncertain = pred.r > 0.0 && pred.r < 1.0;
        let p1 = eval.pair.p_detect_event;
        let branches = [(1.0 - p1, &eval.pair.miss), (p1, &eval.pair.detect)];
        let mut gain = 0.0;
        for (o, (p, h)) in branches.into_iter().enumerate() {
            if p <= 0.0 || (mode == KlMode::DetectOnly && o == 0) {
                continue;
            }
            let r_post = if uncertain {
                h.r.clamp(KL_EXISTENCE_CLAMP, 1.0 - KL_EXISTENCE_CLAMP)
            } else {
                h.r
            };
            gain += p * bernoulli_gaussian_kl((r_post, &h.gaussian), (pred.r, g_pred))?;
        }
        if best.is_none_or(|(b, _)| gain > b) {
            best = Some((gain, *a));
        }
    }
    let (value, action) = best.ok_or(Error::EmptyInput("feasible actions"))?;
    Ok(Decision {
        action,
        value,
        evaluations: actions.len(),
    })
}
