//! Small-instance self-checks: MCTS against exhaustive search and the
//! MSGOSPA bound against Monte Carlo.

use std::fmt;

use gospa_sm::gaussian_bernoulli::{optimal_threshold, BernoulliDensity, Gaussian};
use gospa_sm::planners::{
    exhaustive_bellman, mcts_plan, myopic_plan, BranchModel, ExhaustiveConfig, MctsConfig, Policy,
};
use gospa_sm::planning_costs::msgospa_bound;
use gospa_sm::rng::SeedKey;
use gospa_sm::simulator::ScenarioConfig;
use gospa_sm::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass(String),
    Fail(String),
    Skipped(String),
}

impl Outcome {
    pub fn failed(&self) -> bool {
        matches!(self, Outcome::Fail(_))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Pass(m) => write!(f, "PASS {m}"),
            Outcome::Fail(m) => write!(f, "FAIL {m}"),
            Outcome::Skipped(m) => write!(f, "SKIPPED {m}"),
        }
    }
}

/// A random single-component root density and sensor position.
#[derive(Debug, Clone)]
pub struct MicroScenario {
    pub root: BernoulliDensity,
    pub position: [f64; 2],
}

pub fn micro_scenario(cfg: &ScenarioConfig, key: SeedKey) -> Result<MicroScenario> {
    let mut rng = key.rng();
    let margin = 5.0 * cfg.sensor.step_size;
    let b = cfg.bounds;
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let position = [u(b.min[0] + margin, b.max[0] - margin), u(b.min[1] + margin, b.max[1] - margin)];
    let spread = 1.5 * cfg.sensor.fov_radius;
    let mean = DVector::from_vec(vec![
        position[0] + u(-spread, spread),
        u(-3.0, 3.0),
        position[1] + u(-spread, spread),
        u(-3.0, 3.0),
    ]);
    let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![
        u(10.0, 600.0),
        u(1.0, 20.0),
        u(10.0, 600.0),
        u(1.0, 20.0),
    ]));
    let root = BernoulliDensity::single(u(0.05, 0.95), Gaussian::new(mean, cov)?)?;
    Ok(MicroScenario { root, position })
}

/// Per-case result of the planner check.
#[derive(Debug, Clone)]
pub struct PlannerCase {
    pub mcts_action: usize,
    pub exhaustive_action: usize,
    pub value_gap: f64,
    pub zero_discount_action: usize,
    pub myopic_action: usize,
}

impl PlannerCase {
    pub fn agrees(&self, tol: f64) -> bool {
        self.mcts_action == self.exhaustive_action && self.value_gap <= tol
    }
}

pub fn planner_case(cfg: &ScenarioConfig, mcts: &MctsConfig, key: SeedKey) -> Result<PlannerCase> {
    let problem = cfg.problem()?;
    let s = micro_scenario(cfg, key.with(0))?;
    let step_key = key.with(1);
    let m = mcts_plan(&problem, &s.root, s.position, mcts, step_key)?;
    let e = exhaustive_bellman(
        &problem,
        &s.root,
        s.position,
        &ExhaustiveConfig {
            horizon: mcts.horizon,
            discount: mcts.discount,
            branch_model: BranchModel::Merged,
        },
        step_key,
    )?;
    let zero = MctsConfig {
        discount: 0.0,
        ..mcts.clone()
    };
    let z = mcts_plan(&problem, &s.root, s.position, &zero, step_key)?;
    let g = myopic_plan(&problem, &s.root, s.position, step_key)?;
    Ok(PlannerCase {
        mcts_action: m.action.id,
        exhaustive_action: e.action.id,
        value_gap: (m.value - e.value).abs(),
        zero_discount_action: z.action.id,
        myopic_action: g.action.id,
    })
}

/// MCTS with an exhausting budget against exhaustive search, and with zero
/// discount against the myopic planner. Skipped when the configured budget
/// cannot cover the full tree.
pub fn planner_equivalence(cfg: &ScenarioConfig, cases: usize) -> Result<Outcome> {
    let Policy::Mcts(mcts) = &cfg.policy else {
        return Ok(Outcome::Skipped("planner equivalence: policy is not mcts".into()));
    };
    let full = mcts.full_tree_size(cfg.sensor.num_actions);
    if (mcts.budget as u128) < full {
        return Ok(Outcome::Skipped(format!(
            "planner equivalence: budget {} below full tree size {full}",
            mcts.budget
        )));
    }
    let key = SeedKey::new(cfg.seed).with(0x0AC1E);
    let mut mismatches = 0;
    let mut myopic_mismatches = 0;
    for i in 0..cases {
        let c = planner_case(cfg, mcts, key.with(i as u64))?;
        mismatches += usize::from(!c.agrees(1e-9));
        myopic_mismatches += usize::from(c.zero_discount_action != c.myopic_action);
    }
    let msg = format!(
        "planner equivalence: {}/{cases} match exhaustive, {}/{cases} zero-discount match myopic",
        cases - mismatches,
        cases - myopic_mismatches
    );
    Ok(if mismatches == 0 && myopic_mismatches == 0 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    })
}

/// A random 2-D position covariance with the given trace.
pub fn random_covariance<R: Rng + ?Sized>(trace: f64, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let p = &a * a.transpose() + DMatrix::identity(2, 2) * 1e-6;
    let t = p.trace();
    p * (trace / t)
}

/// Monte Carlo MSGOSPA of the thresholded estimator for a zero-mean
/// posterior `(r, P)`. Returns the mean and its standard error.
pub fn monte_carlo_msgospa<R: Rng + ?Sized>(
    r: f64,
    cov: &DMatrix<f64>,
    c: f64,
    samples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let report = r >= optimal_threshold(cov.trace(), c);
    let g = Gaussian {
        mean: DVector::zeros(2),
        cov: cov.clone(),
    };
    let half = c * c / 2.0;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let exists = rng.random::<f64>() < r;
        let v = match (exists, report) {
            (true, true) => g.sample(rng).norm_squared().min(c * c),
            (true, false) | (false, true) => half,
            (false, false) => 0.0,
        };
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Random zero-mean posteriors `(r, P)` with `r ~ U[0, 1]` and traces
/// uniform in `[0, 2c²]`.
pub fn random_posteriors(c: f64, cases: usize, key: SeedKey) -> Vec<(f64, DMatrix<f64>)> {
    let mut rng = key.rng();
    (0..cases)
        .map(|_| {
            let r = rng.random::<f64>();
            let trace = rng.random::<f64>() * 2.0 * c * c;
            (r, random_covariance(trace, &mut rng))
        })
        .collect()
}

/// Bound validity over [`random_posteriors`]. Returns how many cases satisfy
/// `MC ≤ bound + 3 SE`.
pub fn bound_validity(c: f64, cases: usize, samples: usize, key: SeedKey) -> (usize, usize) {
    let posteriors = random_posteriors(c, cases, key.with(0));
    let ok = posteriors
        .iter()
        .enumerate()
        .filter(|(i, (r, cov))| {
            let mut rng = key.with(1 + *i as u64).rng();
            let (mean, se) = monte_carlo_msgospa(*r, cov, c, samples, &mut rng);
            mean <= msgospa_bound(*r, cov.trace(), c).cost + 3.0 * se
        })
        .count();
    (ok, cases)
}

pub fn bound_check(c: f64, cases: usize, samples: usize, key: SeedKey) -> Outcome {
    let (ok, n) = bound_validity(c, cases, samples, key);
    let msg = format!("bound validity: {ok}/{n} posteriors within 3 standard errors");
    // One case in 500 may exceed 3 SE by chance.
    if n - ok <= n.div_ceil(500) {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}
