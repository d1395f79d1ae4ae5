use serde::{Deserialize, Serialize};

use super::{child_key, node_key, single_root, Decision, PlanningProblem};
use crate::error::{Error, Result};
use crate::gaussian_bernoulli::BernoulliDensity;
use crate::planning_costs::Hypothesis;
use crate::rng::SeedKey;
use crate::sensor_models::{Action, Point};

/// Guard on `|actions|^horizon · 2^horizon`.
pub const MAX_LEAVES: u128 = 1_000_000;

/// How observation branches propagate down the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchModel {
    /// Both hypotheses merged at every node, minimising over action
    /// sequences. This is the model the tree search optimises.
    #[default]
    Merged,
    /// Nested minimisation with a separate posterior per observation branch.
    ClosedLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExhaustiveConfig {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default)]
    pub branch_model: BranchModel,
}

fn default_horizon() -> usize {
    3
}

fn default_discount() -> f64 {
    0.7
}

impl Default for ExhaustiveConfig {
    fn default() -> Self {
        ExhaustiveConfig {
            horizon: default_horizon(),
            discount: default_discount(),
            branch_model: BranchModel::Merged,
        }
    }
}

impl ExhaustiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: "must be at least 1".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::InvalidParameter {
                name: "discount",
                reason: format!("must lie in [0, 1], got {}", self.discount),
            });
        }
        Ok(())
    }
}

/// Minimum over all continuations of the discounted cost accumulated from
/// the root. `acc` already holds the cost of the path so far and `disc` is
/// the discount the next action receives.
#[allow(clippy::too_many_arguments)]
pub(crate) fn best_merged_total<P: PlanningProblem + ?Sized>(
    problem: &P,
    density: &BernoulliDensity,
    position: Point,
    remaining: usize,
    acc: f64,
    disc: f64,
    discount: f64,
    key: SeedKey,
    count: &mut usize,
) -> Result<f64> {
    if remaining == 0 {
        return Ok(acc);
    }
    let mut best = f64::INFINITY;
    for a in problem.actions(position) {
        let k = child_key(key, &a);
        let eval = problem.evaluate(density, &a, k)?;
        *count += 1;
        let total = best_merged_total(
            problem,
            &eval.merged,
            a.target_position,
            remaining - 1,
            acc + disc * eval.cost,
            disc * discount,
            discount,
            k,
            count,
        )?;
        best = best.min(total);
    }
    Ok(best)
}

/// Optimal expected cost-to-go with per-branch posteriors.
fn closed_loop_value<P: PlanningProblem + ?Sized>(
    problem: &P,
    density: &BernoulliDensity,
    position: Point,
    remaining: usize,
    discount: f64,
    key: SeedKey,
    count: &mut usize,
) -> Result<(f64, Option<Action>)> {
    if remaining == 0 {
        return Ok((0.0, None));
    }
    let mut best: (f64, Option<Action>) = (f64::INFINITY, None);
    for a in problem.actions(position) {
        let k = child_key(key, &a);
        let eval = problem.evaluate(density, &a, k)?;
        *count += 1;
        let mut value = eval.cost;
        if remaining > 1 && discount > 0.0 {
            let p1 = eval.pair.p_detect_event;
            let branches: [(f64, &Hypothesis, u64); 2] =
                [(1.0 - p1, &eval.pair.miss, 0), (p1, &eval.pair.detect, 1)];
            for (p, h, o) in branches {
                if p <= 0.0 {
                    continue;
                }
                let post = BernoulliDensity::single(h.r, h.gaussian.clone())?;
                let (v, _) = closed_loop_value(
                    problem,
                    &post,
                    a.target_position,
                    remaining - 1,
                    discount,
                    k.with(1000 + o),
                    count,
                )?;
                value += discount * p * v;
            }
        }
        if value < best.0 {
            best = (value, Some(a));
        }
    }
    Ok(best)
}

/// Exact finite-horizon solution for small problems.
///
/// The first action is discounted by `λ⁰` and the action `d` steps later by
/// `λ^d`.
pub fn exhaustive_bellman<P: PlanningProblem + ?Sized>(
    problem: &P,
    root: &BernoulliDensity,
    position: Point,
    cfg: &ExhaustiveConfig,
    step_key: SeedKey,
) -> Result<Decision> {
    cfg.validate()?;
    let root = single_root(root);
    let key = node_key(step_key);
    let actions = problem.actions(position);
    let width = actions.len() as u128;
    let leaves = (0..cfg.horizon).try_fold(1u128, |acc, _| acc.checked_mul(2 * width));
    match leaves {
        Some(l) if l <= MAX_LEAVES => {}
        other => {
            return Err(Error::SearchSpaceTooLarge {
                leaves: other.unwrap_or(u128::MAX),
                limit: MAX_LEAVES,
            })
        }
    }
    let mut count = 0;
    match cfg.branch_model {
        BranchModel::Merged => {
            let mut best: Option<(f64, Action)> = None;
            for a in &actions {
                let k = child_key(key, a);
                let eval = problem.evaluate(&root, a, k)?;
                count += 1;
                let total = best_merged_total(
                    problem,
                    &eval.merged,
                    a.target_position,
                    cfg.horizon - 1,
                    eval.cost,
                    cfg.discount,
                    cfg.discount,
                    k,
                    &mut count,
                )?;
                if best.is_none_or(|(b, _)| total < b) {
                    best = Some((total, *a));
                }
            }
            let (value, action) = best.ok_or(Error::EmptyInput("feasible actions"))?;
            Ok(Decision {
                action,
                value,
                evaluations: count,
            })
        }
        BranchModel::ClosedLoop => {
            let (value, action) =
                closed_loop_value(problem, &root, position, cfg.horizon, cfg.discount, key, &mut count)?;
            Ok(Decision {
                action: action.ok_or(Error::EmptyInput("feasible actions"))?,
                value,
                evaluations: count,
            })
        }
    }
}
