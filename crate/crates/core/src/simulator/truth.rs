//! Ground truth: the Bernoulli Markov process or scripted trajectories.

use nalgebra::DVector;
use rand::Rng;

use super::config::{ScriptedLife, TruthConfig};
use crate::gaussian_bernoulli::{Gaussian, MotionModel};
use crate::gospa_metric::TargetSet;
use crate::rng::{Purpose, SeedKey};
use crate::sensor_models::Rect;

/// One step of the single-target Bernoulli process.
///
/// An empty set gives birth with probability `p_B`; a target survives with
/// probability `p_S`, moves with the transition plus process noise, and dies
/// if it leaves `bounds`. A target that dies may be reborn on the next step.
pub fn step_truth<R: Rng + ?Sized>(
    x: &TargetSet,
    model: &MotionModel,
    bounds: &Rect,
    rng: &mut R,
) -> TargetSet {
    match x.elements().first() {
        None => {
            if rng.random::<f64>() < model.birth_prob {
                TargetSet::singleton(model.birth.sample(rng))
            } else {
                TargetSet::empty()
            }
        }
        Some(state) => {
            if rng.random::<f64>() >= model.survival {
                return TargetSet::empty();
            }
            let noise = Gaussian {
                mean: DVector::zeros(state.len()),
                cov: model.process_noise.clone(),
            };
            let next = &model.transition * state + noise.sample(rng);
            if bounds.contains([next[0], next[2]]) {
                TargetSet::singleton(next)
            } else {
                TargetSet::empty()
            }
        }
    }
}

impl ScriptedLife {
    fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }

    /// State `[px, vx, py, vy]` after `elapsed` steps, or `None` once the
    /// end of the polyline has been passed.
    pub fn state_at(&self, elapsed: f64) -> Option<DVector<f64>> {
        let first = self.waypoints[0];
        if self.waypoints.len() == 1 || self.speed == 0.0 {
            return Some(DVector::from_vec(vec![first[0], 0.0, first[1], 0.0]));
        }
        let mut left = self.speed * elapsed;
        if left > self.length() + 1e-9 {
            return None;
        }
        for w in self.waypoints.windows(2) {
            let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            let seg = dx.hypot(dy);
            if seg == 0.0 {
                continue;
            }
            let (ux, uy) = (dx / seg, dy / seg);
            if left <= seg {
                return Some(DVector::from_vec(vec![
                    w[0][0] + ux * left,
                    self.speed * ux,
                    w[0][1] + uy * left,
                    self.speed * uy,
                ]));
            }
            left -= seg;
        }
        let last = self.waypoints[self.waypoints.len() - 1];
        Some(DVector::from_vec(vec![last[0], 0.0, last[1], 0.0]))
    }
}

/// Truth at `step` from scripted lives. With overlapping lives the first
/// listed one wins, so at most one target exists. A scripted target outside
/// `bounds` is dead.
pub fn scripted_truth(lives: &[ScriptedLife], repeat_every: Option<usize>, step: usize, bounds: &Rect) -> TargetSet {
    for life in lives {
        if step < life.start_step {
            continue;
        }
        let mut elapsed = step - life.start_step;
        if let Some(period) = repeat_every {
            elapsed %= period;
        }
        if let Some(x) = life.state_at(elapsed as f64) {
            if !bounds.contains([x[0], x[2]]) {
                return TargetSet::empty();
            }
            return TargetSet::singleton(x);
        }
    }
    TargetSet::empty()
}

/// Ground-truth generator for one run. The sampled process draws from the
/// `(seed, run, step, Truth)` stream only, so every policy sees the same
/// truth for a given run.
#[derive(Debug, Clone)]
pub struct TruthProcess {
    config: TruthConfig,
    current: TargetSet,
}

impl TruthProcess {
    pub fn new(config: TruthConfig) -> Self {
        TruthProcess {
            config,
            current: TargetSet::empty(),
        }
    }

    /// Advances to `step` (1-based) and returns the truth there.
    pub fn advance(
        &mut self,
        step: usize,
        model: &MotionModel,
        bounds: &Rect,
        step_key: SeedKey,
    ) -> &TargetSet {
        self.current = match &self.config {
            TruthConfig::Sampled => {
                let mut rng = step_key.purpose(Purpose::Truth).rng();
                step_truth(&self.current, model, bounds, &mut rng)
            }
            TruthConfig::Scripted { lives, repeat_every } => {
                scripted_truth(lives, *repeat_every, step, bounds)
            }
        };
        &self.current
    }
}
