//! Closed-loop episodes: plan, move, sense, filter, score.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::ScenarioConfig;
use super::truth::TruthProcess;
use crate::error::Result;
use crate::gaussian_bernoulli::{
    extract_estimate, merge_components, predict, reduce, update_with_component_pd, BernoulliDensity,
    WeightedGaussian,
};
use crate::gospa_metric::{gospa_on, GospaResult, TargetSet};
use crate::rng::{Purpose, SeedKey};
use crate::sensor_models::{expected_pd, generate_measurements, NoiseClass, Point, Rect};

/// One time step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    pub gospa: GospaResult,
    pub r: f64,
    pub sensor: Point,
    pub action_id: usize,
    pub truth: Option<Vec<f64>>,
    pub estimate: Option<Vec<f64>>,
    pub num_measurements: usize,
    pub plan_seconds: f64,
    pub step_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub policy: String,
    pub steps: Vec<StepRecord>,
}

impl RunMetrics {
    pub fn gospa_series(&self) -> Vec<GospaResult> {
        self.steps.iter().map(|s| s.gospa).collect()
    }

    /// Equality ignoring wall-clock fields.
    pub fn same_outcome(&self, other: &RunMetrics) -> bool {
        let strip = |m: &RunMetrics| {
            m.steps
                .iter()
                .map(|s| StepRecord {
                    plan_seconds: 0.0,
                    step_seconds: 0.0,
                    ..s.clone()
                })
                .collect::<Vec<_>>()
        };
        self.run == other.run && self.policy == other.policy && strip(self) == strip(other)
    }
}

/// Key for step `step` of run `run`.
pub fn step_key(seed: u64, run: usize, step: usize) -> SeedKey {
    SeedKey::new(seed).with(run as u64).with(step as u64)
}

fn first_vec(set: &TargetSet) -> Option<Vec<f64>> {
    set.elements().first().map(|x| x.as_slice().to_vec())
}

/// Survival is zero outside `bounds`: each component is weighted by its
/// probability mass inside (product of the positional marginals) and the
/// existence probability scaled by the total that stays.
fn confine(density: &BernoulliDensity, bounds: &Rect, positions: [usize; 2]) -> BernoulliDensity {
    let mass = |c: &WeightedGaussian| {
        (0..2)
            .map(|a| {
                let i = positions[a];
                let sd = c.gaussian.cov[(i, i)].max(0.0).sqrt();
                let m = c.gaussian.mean[i];
                if sd == 0.0 {
                    return if (bounds.min[a]..=bounds.max[a]).contains(&m) { 1.0 } else { 0.0 };
                }
                let n = Normal::new(m, sd).expect("finite moments");
                n.cdf(bounds.max[a]) - n.cdf(bounds.min[a])
            })
            .product::<f64>()
    };
    let components: Vec<WeightedGaussian> = density
        .components
        .iter()
        .map(|c| WeightedGaussian {
            weight: c.weight * mass(c),
            gaussian: c.gaussian.clone(),
        })
        .filter(|c| c.weight > 0.0)
        .collect();
    let kept: f64 = components.iter().map(|c| c.weight).sum();
    if kept <= 0.0 {
        return BernoulliDensity::empty();
    }
    let components = components
        .into_iter()
        .map(|c| WeightedGaussian {
            weight: c.weight / kept,
            gaussian: c.gaussian,
        })
        .collect();
    BernoulliDensity::new((density.r * kept).min(1.0), components).expect("scaled existence is a probability")
}

/// Runs one episode with the configured policy.
pub fn run_episode(cfg: &ScenarioConfig, run: usize) -> Result<RunMetrics> {
    run_episode_inner(cfg, run, None)
}

/// Runs one episode with the sensor following `path` instead of a policy.
/// Step `k` uses `path[k - 1]`; the last point is held once the path ends.
/// Measurements are taken in the low-noise class.
pub fn run_episode_with_sensor_path(cfg: &ScenarioConfig, run: usize, path: &[Point]) -> Result<RunMetrics> {
    run_episode_inner(cfg, run, Some(path))
}

fn run_episode_inner(cfg: &ScenarioConfig, run: usize, path: Option<&[Point]>) -> Result<RunMetrics> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let motion = &problem.motion;
    let rule = cfg.trace_rule();
    let positions = problem.positions;
    let noise = cfg.noise_model();
    let low = noise.linear_sensor(NoiseClass::Low)?;
    let high = noise.linear_sensor(NoiseClass::High)?;
    let clutter_intensity = cfg.clutter_rate / (PI * cfg.sensor.fov_radius * cfg.sensor.fov_radius);

    let mut density = BernoulliDensity::empty();
    let mut sensor = cfg.sensor_state();
    let mut truth = TruthProcess::new(cfg.truth.clone());
    let mut steps = Vec::with_capacity(cfg.duration);

    for k in 1..=cfg.duration {
        let started = Instant::now();
        let key = step_key(cfg.seed, run, k);

        let (target, class, action_id, plan_seconds) = match path {
            Some(path) => {
                let p = path.get(k - 1).or(path.last()).copied().unwrap_or(sensor.position);
                (p, NoiseClass::Low, usize::MAX, 0.0)
            }
            None => {
                let t = Instant::now();
                let decision = cfg.policy.plan(&problem, &density, sensor.position, key)?;
                let a = decision.action;
                (a.target_position, a.noise_class, a.id, t.elapsed().as_secs_f64())
            }
        };
        sensor = sensor.moved_to(target);
        let measurement_model = match class {
            NoiseClass::Low => &low,
            NoiseClass::High => &high,
        };

        let x = truth.advance(k, motion, &cfg.bounds, key).clone();
        let z = generate_measurements(
            &x,
            &sensor,
            measurement_model,
            cfg.clutter_rate,
            &mut key.purpose(Purpose::Measurement).rng(),
        )?;

        let mut predicted = predict(&density, motion);
        if cfg.filter.confine_to_bounds {
            predicted = confine(&predicted, &cfg.bounds, positions);
        }
        let mut pd_rng = key.purpose(Purpose::FilterPd).rng();
        let pds = predicted
            .components
            .iter()
            .map(|c| {
                expected_pd(
                    &c.gaussian.marginal(&positions),
                    &sensor,
                    cfg.filter.pd_samples,
                    cfg.filter.pd_method,
                    &mut pd_rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let updated = update_with_component_pd(&predicted, &z, measurement_model, &pds, clutter_intensity)?;
        let merged = match cfg.filter.merge_threshold {
            Some(u) => merge_components(&updated, u),
            None => updated,
        };
        density = reduce(&merged, cfg.filter.max_components, cfg.filter.prune_threshold);

        let estimate = extract_estimate(&density, cfg.gospa_c, &rule);
        let gospa = gospa_on(&x, &estimate, cfg.gospa_c, 2.0, &positions)?;
        steps.push(StepRecord {
            step: k,
            gospa,
            r: density.r,
            sensor: sensor.position,
            action_id,
            truth: first_vec(&x),
            estimate: first_vec(&estimate),
            num_measurements: z.len(),
            plan_seconds,
            step_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(RunMetrics {
        run,
        policy: cfg.policy.label(),
        steps,
    })
}
