use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use super::mcts::build_tree;
use super::*;
use crate::gaussian_bernoulli::{predict, reduce, Gaussian, LinearSensor, MotionModel, TraceRule};
use crate::planning_costs::{merge_hypotheses, node_cost, pseudo_update, MergeMode};
use crate::sensor_models::{
    ConvexPolygon, Environment, NoiseClass, NoiseModel, PdMethod, Rect, SensorState,
};

/// Scalar problem with fixed per-action detection probability and noise.
struct Toy {
    motion: MotionModel,
    pd: Vec<f64>,
    noise: Vec<f64>,
    c: f64,
}

impl Toy {
    fn new(pd: Vec<f64>, noise: Vec<f64>, q: f64, ps: f64) -> Self {
        let birth = Gaussian::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 100.0)).unwrap();
        let motion = MotionModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, q),
            ps,
            0.1,
            birth,
        )
        .unwrap();
        Toy { motion, pd, noise, c: 20.0 }
    }
}

impl PlanningProblem for Toy {
    fn actions(&self, _position: Point) -> Vec<Action> {
        (0..self.pd.len())
            .map(|id| Action {
                id,
                target_position: [id as f64, 0.0],
                noise_class: NoiseClass::Low,
            })
            .collect()
    }

    fn evaluate(&self, parent: &BernoulliDensity, action: &Action, _key: SeedKey) -> Result<NodeEval> {
        let predicted = reduce(&predict(parent, &self.motion), 1, 0.0);
        let sensor = LinearSensor::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, self.noise[action.id]),
        )?;
        let pd_bar = self.pd[action.id];
        let pair = pseudo_update(&predicted, &sensor, pd_bar)?;
        let cost = node_cost(&pair, self.c, &TraceRule::full());
        let merged = merge_hypotheses(&pair, MergeMode::AsPrinted);
        Ok(NodeEval { predicted, pd_bar, pair, cost, merged })
    }

    fn predicted_position(&self, root: &BernoulliDensity) -> Option<Point> {
        predict(root, &self.motion).top().map(|g| [g.mean[0], 0.0])
    }
}

fn scalar_root(r: f64, var: f64) -> BernoulliDensity {
    BernoulliDensity::single(
        r,
        Gaussian::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, var)).unwrap(),
    )
    .unwrap()
}

fn fov_problem(num_actions: usize, env: Environment) -> FovProblem {
    let birth = Gaussian::new(
        DVector::from_vec(vec![0.1, 0.0, 0.1, 0.0]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![1000.0, 100.0, 1000.0, 100.0])),
    )
    .unwrap();
    let motion = MotionModel::constant_velocity(1.0, 5.0, 0.99, 0.02, birth).unwrap();
    let sensor = SensorState {
        position: [0.0, 0.0],
        fov_radius: 40.0,
        step_size: 10.0,
        num_actions,
        p_d: 0.9,
    };
    FovProblem::new(
        motion, sensor, &NoiseModel::default(), env, 80.0, TraceRule::default(), 200,
        PdMethod::Auto, MergeMode::AsPrinted,
    )
    .unwrap()
}

fn open_env() -> Environment {
    Environment::open(Rect::new([-500.0, -500.0], [500.0, 500.0]).unwrap())
}

fn fov_root(mean: [f64; 4], var: f64, r: f64) -> BernoulliDensity {
    BernoulliDensity::single(
        r,
        Gaussian::new(DVector::from_vec(mean.to_vec()), DMatrix::identity(4, 4) * var).unwrap(),
    )
    .unwrap()
}

/// Scalar bound, written out independently of the library.
fn bound(r: f64, var: f64, c: f64) -> f64 {
    let c2 = c * c;
    let gamma = 1.0 / (2.0 - (2.0 * var / c2).min(1.0));
    if r <= gamma { c2 / 2.0 * r } else { c2 / 2.0 * (1.0 - r) + r * var.min(c2) }
}

/// One scalar step: returns (p1, (r0, P), (1, P1), merged (r, P)).
fn hand_step(r: f64, var: f64, ps: f64, pb: f64, q: f64, pd: f64, noise: f64) -> (f64, (f64, f64), (f64, f64), (f64, f64)) {
    let rp = pb * (1.0 - r) + ps * r;
    let birth_w = pb * (1.0 - r) / rp;
    // Reduction to one component keeps the heavier of birth (var 100) and survivor.
    let vp = if birth_w > 1.0 - birth_w { 100.0 } else { var + q };
    let p1 = pd * rp;
    let r0 = (1.0 - pd) * rp / (1.0 - rp + (1.0 - pd) * rp);
    let v1 = vp - vp * vp / (vp + noise);
    let merged = ((1.0 - p1) * r0 + p1, (1.0 - p1) * vp + p1 * v1);
    (p1, (r0, vp), (1.0, v1), merged)
}

#[test]
fn myopic_prefers_higher_detection_probability() {
    let toy = Toy::new(vec![0.3, 0.8], vec![5.0, 5.0], 1.0, 0.99);
    let d = myopic_plan(&toy, &scalar_root(0.7, 10.0), [0.0, 0.0], SeedKey::new(0)).unwrap();
    assert_eq!(d.action.id, 1);
}

#[test]
fn myopic_excludes_blocked_actions() {
    let mut env = open_env();
    env.obstacles.obstacles.push(ConvexPolygon::square([10.0, 0.0], 4.0).unwrap());
    let p = fov_problem(6, env);
    let root = fov_root([12.0, 0.0, 0.0, 0.0], 50.0, 0.9);
    let d = myopic_plan(&p, &root, [0.0, 0.0], SeedKey::new(2)).unwrap();
    assert_ne!(d.action.id, 0);
    assert!(p.actions([0.0, 0.0]).iter().all(|a| a.id != 0));
}

#[test]
fn exhaustive_horizon_one_and_zero_discount_are_myopic() {
    let p = fov_problem(6, open_env());
    let root = fov_root([30.0, 1.0, -20.0, 0.5], 80.0, 0.8);
    let key = SeedKey::new(7);
    let my = myopic_plan(&p, &root, [0.0, 0.0], key).unwrap();
    for (horizon, discount) in [(1, 0.7), (3, 0.0)] {
        for branch_model in [BranchModel::Merged, BranchModel::ClosedLoop] {
            let cfg = ExhaustiveConfig { horizon, discount, branch_model };
            let ex = exhaustive_bellman(&p, &root, [0.0, 0.0], &cfg, key).unwrap();
            assert_eq!(ex.action, my.action);
            assert_eq!(ex.value, my.value);
        }
    }
}

#[test]
fn exhaustive_matches_hand_expansion() {
    let (ps, pb, q, c, lambda) = (0.95, 0.1, 2.0, 20.0, 0.7);
    let pds = [0.2, 0.9];
    let noise = [1.0, 30.0];
    let toy = Toy::new(pds.to_vec(), noise.to_vec(), q, ps);
    let (r, var) = (0.6, 8.0);

    let cost = |p1: f64, h0: (f64, f64), h1: (f64, f64)| (1.0 - p1) * bound(h0.0, h0.1, c) + p1 * bound(h1.0, h1.1, c);

    // Closed loop: min over a1 of Σ_o1 p(o1)[C + λ min_a2 Σ_o2 p(o2) C], eight terms per a1.
    let mut closed = f64::INFINITY;
    let mut merged = f64::INFINITY;
    for a1 in 0..2 {
        let (p1, h0, h1, m) = hand_step(r, var, ps, pb, q, pds[a1], noise[a1]);
        let first = cost(p1, h0, h1);
        let mut inner_total = 0.0;
        for (po, h) in [(1.0 - p1, h0), (p1, h1)] {
            let mut best = f64::INFINITY;
            for a2 in 0..2 {
                let (q1, g0, g1, _) = hand_step(h.0, h.1, ps, pb, q, pds[a2], noise[a2]);
                best = best.min(cost(q1, g0, g1));
            }
            inner_total += po * best;
        }
        closed = closed.min(first + lambda * inner_total);
        for a2 in 0..2 {
            let (q1, g0, g1, _) = hand_step(m.0, m.1, ps, pb, q, pds[a2], noise[a2]);
            merged = merged.min(first + lambda * cost(q1, g0, g1));
        }
    }

    let root = scalar_root(r, var);
    for (model, expected) in [(BranchModel::ClosedLoop, closed), (BranchModel::Merged, merged)] {
        let cfg = ExhaustiveConfig { horizon: 2, discount: lambda, branch_model: model };
        let d = exhaustive_bellman(&toy, &root, [0.0, 0.0], &cfg, SeedKey::new(0)).unwrap();
        assert!((d.value - expected).abs() < 1e-9, "{model:?}: {} vs {expected}", d.value);
    }
}

#[test]
fn exhaustive_guard() {
    let toy = Toy::new(vec![0.5; 10], vec![1.0; 10], 1.0, 0.9);
    let cfg = ExhaustiveConfig { horizon: 5, discount: 0.7, branch_model: BranchModel::Merged };
    assert!(matches!(
        exhaustive_bellman(&toy, &scalar_root(0.5, 1.0), [0.0, 0.0], &cfg, SeedKey::new(0)),
        Err(Error::SearchSpaceTooLarge { .. })
    ));
}

fn blank_node(id: usize, parent: Option<usize>, mean: f64, visits: u64) -> mcts::TreeNode {
    mcts::TreeNode {
        action: Some(Action { id, target_position: [0.0, 0.0], noise_class: NoiseClass::Low }),
        parent,
        children: Vec::new(),
        untried: Vec::new(),
        visits,
        immediate_cost: 0.0,
        mean_reward: mean,
        best_reward: f64::NEG_INFINITY,
        density: BernoulliDensity::empty(),
        pd_bar: 0.0,
        depth: 0,
        position: [0.0, 0.0],
        path_cost: 0.0,
        next_discount: 1.0,
        key: SeedKey::new(0),
        exhausted: false,
    }
}

fn tree_with_children(parent_visits: u64, kids: &[(f64, u64)]) -> mcts::Tree {
    let mut nodes = vec![blank_node(99, None, 0.0, parent_visits)];
    for (i, &(m, n)) in kids.iter().enumerate() {
        nodes.push(blank_node(i, Some(0), m, n));
        nodes[0].children.push(i + 1);
    }
    mcts::Tree { nodes }
}

#[test]
fn uct_examples() {
    assert_eq!(tree_with_children(3, &[(-4.0, 2)]).uct_select(0, 0.05), Some(1));
    assert_eq!(tree_with_children(6, &[(-3.0, 5), (-3.0, 1)]).uct_select(0, 0.05), Some(2));
    let t = tree_with_children(10, &[(-10.0, 5), (-12.0, 2)]);
    let s1 = -10.0 + 0.1 * (10f64.ln() / 5.0).sqrt();
    let s2 = -12.0 + 0.1 * (10f64.ln() / 2.0).sqrt();
    assert!(s1 > s2);
    assert_eq!(t.uct_select(0, 0.05), Some(1));
    assert_eq!(tree_with_children(4, &[(-1.0, 2), (-1.0, 2)]).uct_select(0, 0.05), Some(1));
}

#[test]
fn backprop_examples() {
    let mut t = tree_with_children(0, &[(0.0, 0)]);
    t.backpropagate(1, -5.0);
    assert_eq!((t.nodes[1].mean_reward, t.nodes[1].visits), (-5.0, 1));
    t.backpropagate(1, -7.0);
    assert_eq!((t.nodes[1].mean_reward, t.nodes[1].visits), (-6.0, 2));

    let mut chain = tree_with_children(0, &[(0.0, 0)]);
    chain.nodes.push(blank_node(0, Some(1), 0.0, 0));
    chain.nodes[1].children.push(2);
    chain.backpropagate(2, -3.0);
    assert!(chain.nodes.iter().all(|n| n.visits == 1 && n.mean_reward == -3.0));
}

#[test]
fn budget_one_returns_the_expanded_child() {
    let p = fov_problem(6, open_env());
    let root = fov_root([5.0, 0.0, 5.0, 0.0], 100.0, 0.5);
    let cfg = MctsConfig { budget: 1, ..MctsConfig::default() };
    let (tree, d) = build_tree(&p, &root, [0.0, 0.0], &cfg, SeedKey::new(4)).unwrap();
    assert_eq!(tree.nodes.len(), 2);
    assert_eq!(Some(d.action), tree.nodes[1].action);
}

#[test]
fn full_budget_matches_exhaustive_on_small_tree() {
    let toy = Toy::new(vec![0.3, 0.85], vec![2.0, 25.0], 3.0, 0.97);
    let root = scalar_root(0.4, 20.0);
    for rollout in [Rollout::Random, Rollout::Exhaustive] {
        let cfg = MctsConfig {
            horizon: 2, budget: 6, root_rule: RootRule::Best, rollout, ..MctsConfig::default()
        };
        let d = mcts_plan(&toy, &root, [0.0, 0.0], &cfg, SeedKey::new(1)).unwrap();
        let ex = exhaustive_bellman(
            &toy, &root, [0.0, 0.0],
            &ExhaustiveConfig { horizon: 2, discount: cfg.discount, branch_model: BranchModel::Merged },
            SeedKey::new(1),
        )
        .unwrap();
        assert_eq!(d.action, ex.action);
        assert!((d.value - ex.value).abs() < 1e-9);
    }
}

#[test]
fn zero_discount_mcts_is_myopic() {
    let p = fov_problem(6, open_env());
    for seed in 0..5u64 {
        let root = fov_root([20.0 * seed as f64 - 40.0, 1.0, 15.0, -1.0], 60.0, 0.7);
        let cfg = MctsConfig { discount: 0.0, budget: 30, ..MctsConfig::default() };
        let key = SeedKey::new(seed);
        let m = mcts_plan(&p, &root, [0.0, 0.0], &cfg, key).unwrap();
        let g = myopic_plan(&p, &root, [0.0, 0.0], key).unwrap();
        assert_eq!(m.action, g.action);
    }
}

#[test]
fn mcts_is_deterministic() {
    let p = fov_problem(6, open_env());
    let root = fov_root([10.0, 1.0, 15.0, -1.0], 60.0, 0.7);
    let cfg = MctsConfig { budget: 40, ..MctsConfig::default() };
    let a = mcts_plan(&p, &root, [0.0, 0.0], &cfg, SeedKey::new(3)).unwrap();
    let b = mcts_plan(&p, &root, [0.0, 0.0], &cfg, SeedKey::new(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn nearest_sensor_examples() {
    let p = fov_problem(6, open_env());
    // Predicted mean lands on action 0's target after one NCV step.
    let at_action = fov_root([9.0, 1.0, 0.0, 0.0], 10.0, 0.9);
    assert_eq!(nearest_sensor_plan(&p, &at_action, [0.0, 0.0]).unwrap().action.id, 0);
    let north = fov_root([0.0, 0.0, 400.0, 0.0], 10.0, 0.9);
    assert_eq!(nearest_sensor_plan(&p, &north, [0.0, 0.0]).unwrap().action.id, 1);
    let p4 = fov_problem(4, open_env());
    let far_north = fov_root([0.0, 0.0, 400.0, 0.0], 10.0, 0.9);
    assert_eq!(nearest_sensor_plan(&p4, &far_north, [0.0, 0.0]).unwrap().action.id, 1);
}

#[test]
fn kl_examples() {
    let g = Gaussian::new(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2) * 3.0).unwrap();
    assert!(bernoulli_gaussian_kl((0.4, &g), (0.4, &g)).unwrap().abs() < 1e-12);
    let pred = Gaussian::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 4.0)).unwrap();
    let post = Gaussian::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 0.8)).unwrap();
    let v = bernoulli_gaussian_kl((1.0, &post), (1.0, &pred)).unwrap();
    assert!((v - 0.5 * (5.0 - 5f64.ln() - 1.0)).abs() < 1e-12);
    assert!((v - 1.1953).abs() < 1e-4);
    assert_eq!(bernoulli_gaussian_kl((1.0, &post), (0.5, &pred)).unwrap(), f64::INFINITY);
}

#[test]
fn kl_matches_monte_carlo() {
    let pred = Gaussian::new(DVector::from_vec(vec![0.0, 1.0]), DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0])).unwrap();
    let post = Gaussian::new(DVector::from_vec(vec![0.5, 0.0]), DMatrix::from_row_slice(2, 2, &[2.0, -0.3, -0.3, 1.0])).unwrap();
    let (r_pred, r_post) = (0.6, 0.8);
    let closed = bernoulli_gaussian_kl((r_post, &post), (r_pred, &pred)).unwrap();
    let log_pdf = |g: &Gaussian, x: &DVector<f64>| crate::gaussian_bernoulli::log_normal_pdf(x, &g.mean, &g.cov).unwrap();
    let mut rng = SeedKey::new(17).rng();
    let n = 200_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let v = if rng.random::<f64>() < r_pred {
            let x = pred.sample(&mut rng);
            (r_pred / r_post).ln() + log_pdf(&pred, &x) - log_pdf(&post, &x)
        } else {
            ((1.0 - r_pred) / (1.0 - r_post)).ln()
        };
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - closed).abs() < 3.0 * se, "{mean} vs {closed} (se {se})");
}

#[test]
fn kl_plan_prefers_informative_action() {
    let toy = Toy::new(vec![0.1, 0.9], vec![5.0, 5.0], 1.0, 0.99);
    let d = kl_plan(&toy, &scalar_root(0.5, 50.0), [0.0, 0.0], KlMode::Expected, SeedKey::new(0)).unwrap();
    assert_eq!(d.action.id, 1);
    let d = kl_plan(&toy, &scalar_root(0.5, 50.0), [0.0, 0.0], KlMode::DetectOnly, SeedKey::new(0)).unwrap();
    assert_eq!(d.action.id, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_invariants(budget in 1usize..60, horizon in 1usize..5, seed: u64, r in 0.05..0.95f64) {
        let p = fov_problem(4, open_env());
        let root = fov_root([15.0, 1.0, -10.0, 0.0], 80.0, r);
        let cfg = MctsConfig { budget, horizon, ..MctsConfig::default() };
        let (tree, _) = build_tree(&p, &root, [0.0, 0.0], &cfg, SeedKey::new(seed)).unwrap();
        prop_assert!(tree.nodes.len() - 1 <= budget);
        for (i, n) in tree.nodes.iter().enumerate() {
            prop_assert!(n.depth <= horizon);
            let child_visits: u64 = n.children.iter().map(|&c| tree.nodes[c].visits).sum();
            let own = if i == 0 { 0 } else { 1 };
            prop_assert_eq!(n.visits, own + child_visits);
            for &c in &n.children {
                prop_assert_eq!(tree.nodes[c].depth, n.depth + 1);
            }
            let feasible = if n.depth < horizon { p.actions(n.position).len() } else { 0 };
            prop_assert_eq!(n.children.len() + n.untried.len(), feasible);
        }
    }
}
