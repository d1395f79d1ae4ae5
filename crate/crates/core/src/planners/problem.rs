use crate::error::Result;
use crate::gaussian_bernoulli::{predict, reduce, BernoulliDensity, LinearSensor, MotionModel, TraceRule};
use crate::planning_costs::{merge_hypotheses, node_cost, pseudo_update, HypothesisPair, MergeMode};
use crate::rng::SeedKey;
use crate::sensor_models::{
    enumerate_actions, expected_pd, Action, Environment, NoiseClass, NoiseModel, PdMethod, Point,
    SensorState,
};

/// Everything computed when the planner visits an action from a parent
/// density.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEval {
    /// Single-component prediction.
    pub predicted: BernoulliDensity,
    pub pd_bar: f64,
    pub pair: HypothesisPair,
    /// Expected MSGOSPA bound over both hypotheses.
    pub cost: f64,
    /// Both hypotheses merged into one single-component density.
    pub merged: BernoulliDensity,
}

/// The model a planner searches over.
///
/// `evaluate` must be a pure function of its arguments: the key carries all
/// the randomness, so every planner that reaches the same node sees the same
/// numbers.
pub trait PlanningProblem: Sync {
    /// Feasible actions for a sensor at `position`; never empty.
    fn actions(&self, position: Point) -> Vec<Action>;

    fn evaluate(&self, parent: &BernoulliDensity, action: &Action, key: SeedKey) -> Result<NodeEval>;

    /// Positional mean of the heaviest predicted component.
    fn predicted_position(&self, root: &BernoulliDensity) -> Option<Point>;
}

/// The FOV sensor management problem.
#[derive(Debug, Clone)]
pub struct FovProblem {
    pub motion: MotionModel,
    pub sensor: SensorState,
    pub env: Environment,
    pub c: f64,
    pub trace: TraceRule,
    pub positions: [usize; 2],
    pub pd_samples: usize,
    pub pd_method: PdMethod,
    pub merge: MergeMode,
    low: LinearSensor,
    high: LinearSensor,
}

impl FovProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        motion: MotionModel,
        sensor: SensorState,
        noise: &NoiseModel,
        env: Environment,
        c: f64,
        trace: TraceRule,
        pd_samples: usize,
        pd_method: PdMethod,
        merge: MergeMode,
    ) -> Result<Self> {
        sensor.validate()?;
        Ok(FovProblem {
            motion,
            sensor,
            env,
            c,
            trace,
            positions: [0, 2],
            pd_samples,
            pd_method,
            merge,
            low: noise.linear_sensor(NoiseClass::Low)?,
            high: noise.linear_sensor(NoiseClass::High)?,
        })
    }

    pub fn linear_sensor(&self, class: NoiseClass) -> &LinearSensor {
        match class {
            NoiseClass::Low => &self.low,
            NoiseClass::High => &self.high,
        }
    }
}

impl PlanningProblem for FovProblem {
    fn actions(&self, position: Point) -> Vec<Action> {
        enumerate_actions(&self.sensor.moved_to(position), &self.env)
    }

    fn evaluate(&self, parent: &BernoulliDensity, action: &Action, key: SeedKey) -> Result<NodeEval> {
        let mut predicted = reduce(&predict(parent, &self.motion), 1, 0.0);
        if predicted.components.is_empty() {
            // Nothing can exist; keep a placeholder so both hypotheses are defined.
            predicted = BernoulliDensity::single(0.0, self.motion.birth.clone())?;
        }
        let sensor_at = self.sensor.moved_to(action.target_position);
        let marginal = predicted.components[0].gaussian.marginal(&self.positions);
        let pd_bar = expected_pd(&marginal, &sensor_at, self.pd_samples, self.pd_method, &mut key.rng())?;
        let pair = pseudo_update(&predicted, self.linear_sensor(action.noise_class), pd_bar)?;
        let cost = node_cost(&pair, self.c, &self.trace);
        let merged = merge_hypotheses(&pair, self.merge);
        Ok(NodeEval {
            predicted,
            pd_bar,
            pair,
            cost,
            merged,
        })
    }

    fn predicted_position(&self, root: &BernoulliDensity) -> Option<Point> {
        let pred = predict(root, &self.motion);
        pred.top()
            .map(|g| [g.mean[self.positions[0]], g.mean[self.positions[1]]])
    }
}
