//! Monte Carlo tree search over action nodes.
//!
//! Each node stores the merged density after its action, so the tree is over
//! action sequences only. Rewards are negative discounted costs accumulated
//! from the root.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::exhaustive::best_merged_total;
use super::{child_key, node_key, single_root, Decision, PlanningProblem};
use crate::error::{Error, Result};
use crate::gaussian_bernoulli::BernoulliDensity;
use crate::rng::{Purpose, SeedKey, StreamRng};
use crate::sensor_models::{Action, Point};

/// How the root child is chosen once the budget is spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootRule {
    /// Highest mean reward.
    #[default]
    Mean,
    /// Most visits; ties by mean reward, then lowest id.
    Visits,
    /// Highest reward of any single simulation through the child.
    Best,
}

/// Continuation from a newly expanded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rollout {
    /// Uniformly random feasible actions.
    #[default]
    Random,
    /// The best continuation, found by enumeration.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MctsConfig {
    #[serde(default = "defaults::horizon")]
    pub horizon: usize,
    #[serde(default = "defaults::discount")]
    pub discount: f64,
    #[serde(default = "defaults::exploration")]
    pub exploration: f64,
    #[serde(default = "defaults::budget")]
    pub budget: usize,
    #[serde(default = "defaults::rollout_depth")]
    pub rollout_depth: usize,
    #[serde(default)]
    pub root_rule: RootRule,
    #[serde(default)]
    pub rollout: Rollout,
}

mod defaults {
    pub fn horizon() -> usize {
        5
    }
    pub fn discount() -> f64 {
        0.7
    }
    pub fn exploration() -> f64 {
        0.05
    }
    pub fn budget() -> usize {
        10
    }
    pub fn rollout_depth() -> usize {
        10
    }
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            horizon: defaults::horizon(),
            discount: defaults::discount(),
            exploration: defaults::exploration(),
            budget: defaults::budget(),
            rollout_depth: defaults::rollout_depth(),
            root_rule: RootRule::Mean,
            rollout: Rollout::Random,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1".into());
        }
        if self.budget == 0 {
            return bad("budget", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount", format!("must lie in [0, 1], got {}", self.discount));
        }
        if !(self.exploration >= 0.0 && self.exploration.is_finite()) {
            return bad("exploration", format!("must be non-negative, got {}", self.exploration));
        }
        Ok(())
    }

    /// Node count of the complete tree for a constant branching factor.
    pub fn full_tree_size(&self, branching: usize) -> u128 {
        (1..=self.horizon as u32).map(|d| (branching as u128).pow(d)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub action: Option<Action>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub untried: Vec<Action>,
    pub visits: u64,
    /// Expected cost of this node's action, fixed at expansion.
    pub immediate_cost: f64,
    pub mean_reward: f64,
    pub best_reward: f64,
    pub density: BernoulliDensity,
    pub pd_bar: f64,
    pub depth: usize,
    pub position: Point,
    /// Discounted cost from the root up to and including this node.
    pub path_cost: f64,
    /// Discount applied to the next action below this node.
    pub next_discount: f64,
    pub key: SeedKey,
    /// No expandable node remains in this subtree.
    pub exhausted: bool,
}

/// Search tree stored as an arena; index 0 is the root.
#[derive(Debug, Clone)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// UCT child selection among children that can still be expanded.
    /// Ties go to the lowest action id.
    pub fn uct_select(&self, node: usize, exploration: f64) -> Option<usize> {
        let parent = &self.nodes[node];
        let ln_n = (parent.visits as f64).ln();
        let mut best: Option<(f64, usize, usize)> = None;
        for &c in &parent.children {
            let child = &self.nodes[c];
            if child.exhausted {
                continue;
            }
            let score = child.mean_reward + 2.0 * exploration * (ln_n / child.visits as f64).sqrt();
            let id = child.action.map_or(usize::MAX, |a| a.id);
            let better = match best {
                None => true,
                Some((s, bid, _)) => score > s || (score == s && id < bid),
            };
            if better {
                best = Some((score, id, c));
            }
        }
        best.map(|(_, _, c)| c)
    }

    /// Adds `delta` to every node from `leaf` to the root, updating the mean
    /// before the visit count.
    pub fn backpropagate(&mut self, leaf: usize, delta: f64) {
        let mut cur = Some(leaf);
        while let Some(i) = cur {
            let n = &mut self.nodes[i];
            n.mean_reward += (delta - n.mean_reward) / (n.visits as f64 + 1.0);
            n.visits += 1;
            n.best_reward = n.best_reward.max(delta);
            cur = n.parent;
        }
    }

    fn refresh_exhausted(&mut self, from: usize) {
        let mut cur = Some(from);
        while let Some(i) = cur {
            let n = &self.nodes[i];
            let done = n.untried.is_empty() && n.children.iter().all(|&c| self.nodes[c].exhausted);
            if !done {
                break;
            }
            self.nodes[i].exhausted = true;
            cur = self.nodes[i].parent;
        }
    }

    fn choose_root_child(&self, rule: RootRule) -> Option<usize> {
        let mut best: Option<usize> = None;
        for &c in &self.root().children {
            let better = match best {
                None => true,
                Some(b) => {
                    let (x, y) = (&self.nodes[c], &self.nodes[b]);
                    let ord = match rule {
                        RootRule::Mean => x.mean_reward.total_cmp(&y.mean_reward),
                        RootRule::Best => x.best_reward.total_cmp(&y.best_reward),
                        RootRule::Visits => x
                            .visits
                            .cmp(&y.visits)
                            .then(x.mean_reward.total_cmp(&y.mean_reward)),
                    };
                    let id = |n: &TreeNode| n.action.map_or(usize::MAX, |a| a.id);
                    ord.is_gt() || (ord.is_eq() && id(x) < id(y))
                }
            };
            if better {
                best = Some(c);
            }
        }
        best
    }
}

fn root_value(node: &TreeNode, rule: RootRule) -> f64 {
    match rule {
        RootRule::Best => -node.best_reward,
        _ => -node.mean_reward,
    }
}

struct Search<'a, P: PlanningProblem + ?Sized> {
    problem: &'a P,
    cfg: &'a MctsConfig,
    tree: Tree,
    rng: StreamRng,
}

impl<P: PlanningProblem + ?Sized> Search<'_, P> {
    fn expand(&mut self, parent: usize) -> Result<usize> {
        let pick = self.rng.random_range(0..self.tree.nodes[parent].untried.len());
        let action = self.tree.nodes[parent].untried.remove(pick);
        let p = &self.tree.nodes[parent];
        let key = child_key(p.key, &action);
        let eval = self.problem.evaluate(&p.density, &action, key)?;
        let depth = p.depth + 1;
        let untried = if depth < self.cfg.horizon {
            self.problem.actions(action.target_position)
        } else {
            Vec::new()
        };
        let node = TreeNode {
            action: Some(action),
            parent: Some(parent),
            children: Vec::new(),
            exhausted: untried.is_empty(),
            untried,
            visits: 0,
            immediate_cost: eval.cost,
            mean_reward: 0.0,
            best_reward: f64::NEG_INFINITY,
            density: eval.merged,
            pd_bar: eval.pd_bar,
            depth,
            position: action.target_position,
            path_cost: p.path_cost + p.next_discount * eval.cost,
            next_discount: p.next_discount * self.cfg.discount,
            key,
        };
        let idx = self.tree.nodes.len();
        self.tree.nodes.push(node);
        self.tree.nodes[parent].children.push(idx);
        Ok(idx)
    }

    /// Total discounted cost of one simulated completion below `leaf`.
    fn simulate(&mut self, leaf: usize) -> Result<f64> {
        let node = &self.tree.nodes[leaf];
        let limit = self.cfg.horizon.min(self.cfg.rollout_depth);
        let remaining = limit.saturating_sub(node.depth);
        match self.cfg.rollout {
            Rollout::Exhaustive => {
                let mut count = 0;
                best_merged_total(
                    self.problem,
                    &node.density,
                    node.position,
                    remaining,
                    node.path_cost,
                    node.next_discount,
                    self.cfg.discount,
                    node.key,
                    &mut count,
                )
            }
            Rollout::Random => {
                let mut density = node.density.clone();
                let mut position = node.position;
                let mut acc = node.path_cost;
                let mut disc = node.next_discount;
                let mut key = node.key;
                for _ in 0..remaining {
                    let actions = self.problem.actions(position);
                    let a = actions[self.rng.random_range(0..actions.len())];
                    key = child_key(key, &a);
                    let eval = self.problem.evaluate(&density, &a, key)?;
                    acc += disc * eval.cost;
                    disc *= self.cfg.discount;
                    density = eval.merged;
                    position = a.target_position;
                }
                Ok(acc)
            }
        }
    }

    fn iterate(&mut self) -> Result<()> {
        let mut node = 0;
        while self.tree.nodes[node].untried.is_empty() {
            node = self
                .tree
                .uct_select(node, self.cfg.exploration)
                .expect("a non-exhausted node has a non-exhausted child");
        }
        let leaf = self.expand(node)?;
        let total = self.simulate(leaf)?;
        self.tree.backpropagate(leaf, -total);
        self.tree.refresh_exhausted(leaf);
        Ok(())
    }
}

/// Builds the search tree and returns it with the chosen root child.
pub fn build_tree<P: PlanningProblem + ?Sized>(
    problem: &P,
    root: &BernoulliDensity,
    position: Point,
    cfg: &MctsConfig,
    step_key: SeedKey,
) -> Result<(Tree, Decision)> {
    cfg.validate()?;
    let untried = problem.actions(position);
    let root_node = TreeNode {
        action: None,
        parent: None,
        children: Vec::new(),
        exhausted: untried.is_empty(),
        untried,
        visits: 0,
        immediate_cost: 0.0,
        mean_reward: 0.0,
        best_reward: f64::NEG_INFINITY,
        density: single_root(root),
        pd_bar: 0.0,
        depth: 0,
        position,
        path_cost: 0.0,
        next_discount: 1.0,
        key: node_key(step_key),
    };
    let mut search = Search {
        problem,
        cfg,
        tree: Tree {
            nodes: vec![root_node],
        },
        rng: step_key.purpose(Purpose::Planner).rng(),
    };
    while search.tree.nodes.len() - 1 < cfg.budget && !search.tree.root().exhausted {
        search.iterate()?;
    }
    let tree = search.tree;
    let chosen = tree
        .choose_root_child(cfg.root_rule)
        .ok_or(Error::EmptyInput("feasible actions"))?;
    let node = &tree.nodes[chosen];
    let decision = Decision {
        action: node.action.expect("root children carry actions"),
        value: root_value(node, cfg.root_rule),
        evaluations: tree.nodes.len() - 1,
    };
    Ok((tree, decision))
}

/// MCTS planning with a node budget.
pub fn mcts_plan<P: PlanningProblem + ?Sized>(
    problem: &P,
    root: &BernoulliDensity,
    position: Point,
    cfg: &MctsConfig,
    step_key: SeedKey,
) -> Result<Decision> {
    build_tree(problem, root, position, cfg, step_key).map(|(_, d)| d)
}
