//! Scenario configuration: a versioned JSON document with strict fields.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::gaussian_bernoulli::{Gaussian, MotionModel, TraceRule, TraceScope};
use crate::planners::{FovProblem, MctsConfig, Policy};
use crate::planning_costs::MergeMode;
use crate::sensor_models::{
    Environment, NoiseClass, NoiseModel, ObstacleMap, PdMethod, Point, Rect, SensorState,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default = "defaults::bounds")]
    pub bounds: Rect,
    /// Number of time steps K.
    #[serde(default = "defaults::duration")]
    pub duration: usize,
    pub motion: MotionConfig,
    pub sensor: SensorConfig,
    /// Expected clutter count per scan, uniform over the FOV.
    #[serde(default = "defaults::clutter_rate")]
    pub clutter_rate: f64,
    #[serde(default)]
    pub obstacles: ObstacleMap,
    #[serde(default = "defaults::gospa_c")]
    pub gospa_c: f64,
    /// Covariance entries entering the detection threshold and planning bound.
    #[serde(default)]
    pub trace_scope: TraceScope,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub planning: PlanningConfig,
    #[serde(default = "defaults::policy")]
    pub policy: Policy,
    #[serde(default = "defaults::mc_runs")]
    pub mc_runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub truth: TruthConfig,
    /// Step after which the obstacle trap is in effect; reported separately.
    #[serde(default)]
    pub trap_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    #[serde(default = "defaults::q")]
    pub q: f64,
    #[serde(default = "defaults::birth_mean")]
    pub birth_mean: [f64; 4],
    #[serde(default = "defaults::birth_cov_diag")]
    pub birth_cov_diag: [f64; 4],
    #[serde(default = "defaults::p_s")]
    pub p_s: f64,
    #[serde(default = "defaults::p_b")]
    pub p_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Defaults to the centre of the bounds.
    #[serde(default)]
    pub initial_position: Option<Point>,
    #[serde(default = "defaults::fov_radius")]
    pub fov_radius: f64,
    #[serde(default = "defaults::step_size")]
    pub step_size: f64,
    #[serde(default = "defaults::num_actions")]
    pub num_actions: usize,
    #[serde(default = "defaults::p_d")]
    pub p_d: f64,
    /// Per-axis measurement noise variance of low-noise actions.
    #[serde(default = "defaults::noise_low")]
    pub noise_low: f64,
    #[serde(default = "defaults::noise_high")]
    pub noise_high: f64,
    /// Noise class per action id. Unset: even ids low, odd ids high.
    #[serde(default)]
    pub noise_classes: Option<Vec<NoiseClass>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "defaults::max_components")]
    pub max_components: usize,
    #[serde(default = "defaults::prune_threshold")]
    pub prune_threshold: f64,
    /// Squared Mahalanobis gate for merging components before pruning;
    /// `null` disables merging.
    #[serde(default = "defaults::merge_threshold")]
    pub merge_threshold: Option<f64>,
    #[serde(default = "defaults::pd_samples")]
    pub pd_samples: usize,
    #[serde(default)]
    pub pd_method: PdMethod,
    /// Treats survival as zero outside the bounds: predicted components whose
    /// mean has left are dropped and the existence probability scaled down.
    #[serde(default = "defaults::yes")]
    pub confine_to_bounds: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_components: defaults::max_components(),
            prune_threshold: defaults::prune_threshold(),
            merge_threshold: defaults::merge_threshold(),
            pd_samples: defaults::pd_samples(),
            pd_method: PdMethod::Auto,
            confine_to_bounds: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningConfig {
    /// Importance samples per tree node.
    #[serde(default = "defaults::pd_samples")]
    pub pd_samples: usize,
    #[serde(default)]
    pub pd_method: PdMethod,
    #[serde(default)]
    pub merge_mode: MergeMode,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        PlanningConfig {
            pd_samples: defaults::pd_samples(),
            pd_method: PdMethod::Auto,
            merge_mode: MergeMode::AsPrinted,
        }
    }
}

/// Ground truth: sampled from the motion model or scripted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthConfig {
    #[default]
    Sampled,
    Scripted {
        lives: Vec<ScriptedLife>,
        /// Replays every life with this period (steps).
        #[serde(default)]
        repeat_every: Option<usize>,
    },
}

/// A target moving at constant speed along a polyline, present from
/// `start_step` until it reaches the last waypoint or leaves the bounds. A
/// single waypoint gives a static target that never leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedLife {
    pub start_step: usize,
    pub speed: f64,
    pub waypoints: Vec<Point>,
}

mod defaults {
    use super::*;

    pub fn bounds() -> Rect {
        Rect {
            min: [-500.0, -500.0],
            max: [500.0, 500.0],
        }
    }
    pub fn duration() -> usize {
        300
    }
    pub fn clutter_rate() -> f64 {
        1.0
    }
    pub fn gospa_c() -> f64 {
        80.0
    }
    pub fn policy() -> Policy {
        Policy::Mcts(MctsConfig::default())
    }
    pub fn mc_runs() -> usize {
        20
    }
    pub fn tau() -> f64 {
        1.0
    }
    pub fn q() -> f64 {
        5.0
    }
    pub fn birth_mean() -> [f64; 4] {
        [0.1, 0.0, 0.1, 0.0]
    }
    pub fn birth_cov_diag() -> [f64; 4] {
        [1000.0, 100.0, 1000.0, 100.0]
    }
    pub fn p_s() -> f64 {
        0.99
    }
    pub fn p_b() -> f64 {
        0.02
    }
    pub fn fov_radius() -> f64 {
        40.0
    }
    pub fn step_size() -> f64 {
        10.0
    }
    pub fn num_actions() -> usize {
        6
    }
    pub fn p_d() -> f64 {
        0.9
    }
    pub fn noise_low() -> f64 {
        10.0
    }
    pub fn noise_high() -> f64 {
        50.0
    }
    pub fn max_components() -> usize {
        10
    }
    pub fn prune_threshold() -> f64 {
        1e-4
    }
    pub fn yes() -> bool {
        true
    }
    pub fn merge_threshold() -> Option<f64> {
        Some(4.0)
    }
    pub fn pd_samples() -> usize {
        1000
    }
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Wraps a validation error in `section`, appending the parameter name to
/// the path when the error carries one.
fn in_path(section: &str, err: Error) -> Error {
    match err {
        Error::Config { .. } => err,
        Error::ProbabilityOutOfRange { name, .. } | Error::InvalidParameter { name, .. } => {
            config_err(&format!("{section}.{name}"), err.to_string())
        }
        other => config_err(section, other.to_string()),
    }
}

impl ScenarioConfig {
    /// Parses and validates a JSON document. Errors carry the field path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        Rect::new(self.bounds.min, self.bounds.max).map_err(|e| config_err("bounds", e.to_string()))?;
        if self.duration == 0 {
            return Err(config_err("duration", "must be at least 1"));
        }
        if self.mc_runs == 0 {
            return Err(config_err("mc_runs", "must be at least 1"));
        }
        if !(self.gospa_c > 0.0 && self.gospa_c.is_finite()) {
            return Err(config_err("gospa_c", "must be positive"));
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return Err(config_err("clutter_rate", "must be non-negative"));
        }
        let m = &self.motion;
        if !(m.tau > 0.0 && m.q >= 0.0) {
            return Err(config_err("motion", "tau must be positive and q non-negative"));
        }
        check_probability("p_s", m.p_s).map_err(|e| in_path("motion", e))?;
        check_probability("p_b", m.p_b).map_err(|e| in_path("motion", e))?;
        if m.birth_cov_diag.iter().any(|&v| !(v > 0.0)) {
            return Err(config_err("motion.birth_cov_diag", "entries must be positive"));
        }
        let s = &self.sensor;
        self.sensor_state().validate().map_err(|e| in_path("sensor", e))?;
        if !(s.noise_low > 0.0 && s.noise_high > 0.0) {
            return Err(config_err("sensor", "noise variances must be positive"));
        }
        let start = self.initial_position();
        if !self.environment().is_feasible(start) {
            return Err(config_err(
                "sensor.initial_position",
                "must lie inside the bounds and outside obstacles",
            ));
        }
        if self.filter.max_components == 0 {
            return Err(config_err("filter.max_components", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.filter.prune_threshold) {
            return Err(config_err("filter.prune_threshold", "must lie in [0, 1)"));
        }
        if self.filter.merge_threshold.is_some_and(|u| !(u >= 0.0)) {
            return Err(config_err("filter.merge_threshold", "must be non-negative"));
        }
        if self.filter.pd_samples == 0 {
            return Err(config_err("filter.pd_samples", "must be at least 1"));
        }
        if self.planning.pd_samples == 0 {
            return Err(config_err("planning.pd_samples", "must be at least 1"));
        }
        self.policy.validate().map_err(|e| in_path("policy", e))?;
        if let TruthConfig::Scripted { lives, repeat_every } = &self.truth {
            if *repeat_every == Some(0) {
                return Err(config_err("truth.repeat_every", "must be at least 1"));
            }
            for (i, life) in lives.iter().enumerate() {
                let path = format!("truth.lives[{i}]");
                if life.waypoints.is_empty() {
                    return Err(config_err(&path, "needs at least one waypoint"));
                }
                if !(life.speed >= 0.0 && life.speed.is_finite()) {
                    return Err(config_err(&path, "speed must be non-negative"));
                }
                if !self.bounds.contains(life.waypoints[0]) {
                    return Err(config_err(&path, "the first waypoint must lie inside the bounds"));
                }
            }
        }
        Ok(())
    }

    pub fn initial_position(&self) -> Point {
        self.sensor.initial_position.unwrap_or_else(|| self.bounds.centre())
    }

    pub fn sensor_state(&self) -> SensorState {
        SensorState {
            position: self.initial_position(),
            fov_radius: self.sensor.fov_radius,
            step_size: self.sensor.step_size,
            num_actions: self.sensor.num_actions,
            p_d: self.sensor.p_d,
        }
    }

    pub fn environment(&self) -> Environment {
        Environment {
            bounds: self.bounds,
            obstacles: self.obstacles.clone(),
            noise_classes: self.sensor.noise_classes.clone(),
        }
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel::isotropic(self.sensor.noise_low, self.sensor.noise_high)
    }

    pub fn trace_rule(&self) -> TraceRule {
        match self.trace_scope {
            TraceScope::Position => TraceRule::position(vec![0, 2]),
            TraceScope::Full => TraceRule::full(),
        }
    }

    pub fn motion_model(&self) -> Result<MotionModel> {
        let m = &self.motion;
        let birth = Gaussian::new(
            DVector::from_row_slice(&m.birth_mean),
            DMatrix::from_diagonal(&DVector::from_row_slice(&m.birth_cov_diag)),
        )?;
        MotionModel::constant_velocity(m.tau, m.q, m.p_s, m.p_b, birth)
    }

    /// Planning problem for this scenario.
    pub fn problem(&self) -> Result<FovProblem> {
        FovProblem::new(
            self.motion_model()?,
            self.sensor_state(),
            &self.noise_model(),
            self.environment(),
            self.gospa_c,
            self.trace_rule(),
            self.planning.pd_samples,
            self.planning.pd_method,
            self.planning.merge_mode,
        )
    }
}
