//! Planning arithmetic: the two-hypothesis pseudo-update, the MSGOSPA upper
//! bound with its optimal detection threshold, per-node expected cost and the
//! merge of both hypotheses back into one Gaussian Bernoulli density.
//!
//! Planning assumes no clutter and, under detection, the ideal measurement at
//! the predicted mean, so both hypotheses keep the predicted mean.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::gaussian_bernoulli::{
    innovation, optimal_threshold, BernoulliDensity, Gaussian, LinearSensor, TraceRule,
};

/// One observation hypothesis: existence probability and Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub r: f64,
    pub gaussian: Gaussian,
}

/// Misdetection (`o = 0`) and detection (`o = 1`) posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisPair {
    pub miss: Hypothesis,
    pub detect: Hypothesis,
    /// Probability of the detection hypothesis, `r p̄ᴰ`.
    pub p_detect_event: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedMeasurement {
    pub p_detect_event: f64,
    pub z_hat: DVector<f64>,
    pub s: nalgebra::DMatrix<f64>,
}

fn single_component(pred: &BernoulliDensity) -> Result<&Gaussian> {
    match pred.components.as_slice() {
        [c] => Ok(&c.gaussian),
        other => Err(Error::InvalidParameter {
            name: "density",
            reason: format!("planning needs exactly one component, got {}", other.len()),
        }),
    }
}

/// Bernoulli density of the predicted measurement.
pub fn predicted_measurement_density(
    pred: &BernoulliDensity,
    sensor: &LinearSensor,
    pd_bar: f64,
) -> Result<PredictedMeasurement> {
    check_probability("pD_bar", pd_bar)?;
    let g = single_component(pred)?;
    let (z_hat, s) = sensor.predicted_measurement(g);
    Ok(PredictedMeasurement {
        p_detect_event: pd_bar * pred.r,
        z_hat,
        s,
    })
}

/// Updates a single-component prediction under both observation hypotheses.
pub fn pseudo_update(
    pred: &BernoulliDensity,
    sensor: &LinearSensor,
    pd_bar: f64,
) -> Result<HypothesisPair> {
    check_probability("pD_bar", pd_bar)?;
    let g = single_component(pred)?;
    let r = pred.r;
    let miss_num = (1.0 - pd_bar) * r;
    let miss_den = 1.0 - r + miss_num;
    // Only r = 1 with p̄ᴰ = 1 gives 0/0; that hypothesis has zero probability
    // and the target is certain to exist.
    let r0 = if miss_den > 0.0 { miss_num / miss_den } else { 1.0 };
    let inn = innovation(g, sensor)?;
    Ok(HypothesisPair {
        miss: Hypothesis {
            r: r0,
            gaussian: g.clone(),
        },
        detect: Hypothesis {
            r: 1.0,
            gaussian: Gaussian {
                mean: g.mean.clone(),
                cov: inn.updated_cov,
            },
        },
        p_detect_event: pd_bar * r,
    })
}

/// Bound value and the threshold that achieves it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsgospaBound {
    pub cost: f64,
    pub threshold: f64,
}

/// Upper bound on the MSGOSPA error of the thresholded estimator for a
/// threshold `gamma`.
pub fn decomposed_cost(gamma: f64, r: f64, trace: f64, c: f64) -> f64 {
    let c2 = c * c;
    if r <= gamma {
        0.5 * c2 * r
    } else {
        0.5 * c2 * (1.0 - r) + r * trace.min(c2)
    }
}

/// The bound at the optimal detection threshold.
pub fn msgospa_bound(r: f64, trace: f64, c: f64) -> MsgospaBound {
    let threshold = optimal_threshold(trace, c);
    MsgospaBound {
        cost: decomposed_cost(threshold, r, trace, c),
        threshold,
    }
}

pub fn hypothesis_bound(h: &Hypothesis, c: f64, rule: &TraceRule) -> MsgospaBound {
    msgospa_bound(h.r, rule.trace(&h.gaussian.cov), c)
}

/// Expected bound over both hypotheses.
pub fn node_cost(pair: &HypothesisPair, c: f64, rule: &TraceRule) -> f64 {
    let p = pair.p_detect_event;
    (1.0 - p) * hypothesis_bound(&pair.miss, c, rule).cost
        + p * hypothesis_bound(&pair.detect, c, rule).cost
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Hypothesis-probability weights for existence, mean and covariance.
    #[default]
    AsPrinted,
    /// Existence-weighted moment matching including the mean-spread term.
    MomentMatched,
}

/// Collapses both hypotheses into one single-component density.
pub fn merge_hypotheses(pair: &HypothesisPair, mode: MergeMode) -> BernoulliDensity {
    let w1 = pair.p_detect_event;
    let w0 = 1.0 - w1;
    let (m, d) = (&pair.miss, &pair.detect);
    let r = w0 * m.r + w1 * d.r;
    let (b0, b1) = match mode {
        MergeMode::AsPrinted => (w0, w1),
        MergeMode::MomentMatched if r > 0.0 => (w0 * m.r / r, w1 * d.r / r),
        MergeMode::MomentMatched => (w0, w1),
    };
    let mean = &m.gaussian.mean * b0 + &d.gaussian.mean * b1;
    let mut cov = &m.gaussian.cov * b0 + &d.gaussian.cov * b1;
    if mode == MergeMode::MomentMatched {
        for (b, g) in [(b0, &m.gaussian), (b1, &d.gaussian)] {
            let diff = &g.mean - &mean;
            cov += &diff * diff.transpose() * b;
        }
    }
    BernoulliDensity {
        r: r.clamp(0.0, 1.0),
        components: vec![crate::gaussian_bernoulli::WeightedGaussian {
            weight: 1.0,
            gaussian: Gaussian { mean, cov },
        }],
    }
}
