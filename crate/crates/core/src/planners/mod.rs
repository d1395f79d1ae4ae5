//! Action-selection policies.
//!
//! All planners share [`PlanningProblem::evaluate`] and key node randomness
//! by the action path from the root, so the myopic planner, the exhaustive
//! oracle and MCTS see identical expected detection probabilities for the
//! same node.

mod baselines;
mod exhaustive;
pub mod mcts;
mod problem;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_bernoulli::{reduce, BernoulliDensity};
use crate::rng::{Purpose, SeedKey};
use crate::sensor_models::{Action, Point};

pub use baselines::{bernoulli_gaussian_kl, kl_plan, nearest_sensor_plan, KlMode};
pub use exhaustive::{exhaustive_bellman, BranchModel, ExhaustiveConfig, MAX_LEAVES};
pub use mcts::{mcts_plan, MctsConfig, RootRule, Rollout};
pub use problem::{FovProblem, NodeEval, PlanningProblem};

/// A planner's choice.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// Expected discounted cost of the choice for cost-based planners, the
    /// expected information gain for the KL baseline, distance for NS.
    pub value: f64,
    /// Nodes added to the search tree (MCTS) or evaluated.
    pub evaluations: usize,
}

/// Child key of a node reached via `action`.
pub(crate) fn child_key(key: SeedKey, action: &Action) -> SeedKey {
    key.with(action.id as u64)
}

/// Node-evaluation key for a planning step.
pub fn node_key(step_key: SeedKey) -> SeedKey {
    step_key.purpose(Purpose::PlannerNode)
}

pub(crate) fn single_root(root: &BernoulliDensity) -> BernoulliDensity {
    reduce(root, 1, 0.0)
}

/// Myopic GOSPA-driven planning: the action with the lowest expected bound
/// one step ahead. Ties go to the lowest action id.
pub fn myopic_plan<P: PlanningProblem + ?Sized>(
    problem: &P,
    root: &BernoulliDensity,
    position: Point,
    step_key: SeedKey,
) -> Result<Decision> {
    let root = single_root(root);
    let key = node_key(step_key);
    let actions = problem.actions(position);
    let mut best: Option<(f64, Action)> = None;
    for a in &actions {
        let cost = problem.evaluate(&root, a, child_key(key, a))?.cost;
        if best.is_none_or(|(b, _)| cost < b) {
            best = Some((cost, *a));
        }
    }
    let (value, action) = best.ok_or(Error::EmptyInput("feasible actions"))?;
    Ok(Decision {
        action,
        value,
        evaluations: actions.len(),
    })
}

/// Policy selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    /// Move towards the predicted target position.
    Ns,
    /// Myopic GOSPA-driven planning.
    Gd,
    /// Expected information gain.
    Kl {
        #[serde(default)]
        mode: KlMode,
    },
    Mcts(MctsConfig),
    Exhaustive(ExhaustiveConfig),
}

impl Policy {
    pub fn plan<P: PlanningProblem + ?Sized>(
        &self,
        problem: &P,
        root: &BernoulliDensity,
        position: Point,
        step_key: SeedKey,
    ) -> Result<Decision> {
        match self {
            Policy::Ns => nearest_sensor_plan(problem, root, position),
            Policy::Gd => myopic_plan(problem, root, position, step_key),
            Policy::Kl { mode } => kl_plan(problem, root, position, *mode, step_key),
            Policy::Mcts(cfg) => mcts_plan(problem, root, position, cfg, step_key),
            Policy::Exhaustive(cfg) => exhaustive_bellman(problem, root, position, cfg, step_key),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Policy::Mcts(cfg) => cfg.validate(),
            Policy::Exhaustive(cfg) => cfg.validate(),
            _ => Ok(()),
        }
    }

    /// Short label such as `mcts-10`.
    pub fn label(&self) -> String {
        match self {
            Policy::Ns => "ns".into(),
            Policy::Gd => "gd".into(),
            Policy::Kl { mode: KlMode::Expected } => "kl".into(),
            Policy::Kl { mode: KlMode::DetectOnly } => "kl-detect".into(),
            Policy::Mcts(cfg) => format!("mcts-{}", cfg.budget),
            Policy::Exhaustive(cfg) => format!("exhaustive-{}", cfg.horizon),
        }
    }
}

#[cfg(test)]
mod tests;
