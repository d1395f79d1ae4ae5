//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use gospa_sm::gaussian_bernoulli::{log_normal_pdf, optimal_threshold, Gaussian};
use gospa_sm::gospa_metric::{gospa, TargetSet};
use gospa_sm::planners::{bernoulli_gaussian_kl, Policy};
use gospa_sm::planning_costs::decomposed_cost;
use gospa_sm::rng::SeedKey;
use gospa_sm::sensor_models::{expected_pd, PdMethod, SensorState};
use gospa_sm::simulator::{run_comparison, PolicyBatch, ScenarioConfig};
use gospa_sm_cli::oracle::{bound_validity, planner_equivalence, random_posteriors, Outcome};
use gospa_sm_cli::policy::{parse_policy, Overrides};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const C: f64 = 80.0;
const KEY: u64 = 20_240_601;

fn config(name: &str) -> (PathBuf, ScenarioConfig) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let text = std::fs::read_to_string(&path).expect("shipped config");
    (path, ScenarioConfig::from_json_str(&text).expect("valid shipped config"))
}

fn policies(specs: &[&str]) -> Vec<Policy> {
    specs.iter().map(|s| parse_policy(s, Overrides::default()).expect("policy")).collect()
}

fn verdict(ok: bool, msg: String) -> Outcome {
    if ok {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

/// Minimum squared GOSPA (p = 2, α = 2) over every partial assignment.
fn enumerate_gospa(x: &[[f64; 2]], y: &[[f64; 2]], c: f64) -> f64 {
    fn go(i: usize, x: &[[f64; 2]], y: &[[f64; 2]], used: &mut [bool], acc: f64, paired: usize, c: f64) -> f64 {
        if i == x.len() {
            return acc + 0.5 * c * c * (x.len() + y.len() - 2 * paired) as f64;
        }
        let mut best = go(i + 1, x, y, used, acc, paired, c);
        for j in 0..y.len() {
            if !used[j] {
                used[j] = true;
                let d = (x[i][0] - y[j][0]).powi(2) + (x[i][1] - y[j][1]).powi(2);
                best = best.min(go(i + 1, x, y, used, acc + d, paired + 1, c));
                used[j] = false;
            }
        }
        best
    }
    go(0, x, y, &mut vec![false; y.len()], 0.0, 0, c)
}

fn random_set<R: Rng + ?Sized>(rng: &mut R) -> Vec<[f64; 2]> {
    let n = rng.random_range(0..=4);
    (0..n).map(|_| [rng.random_range(-150.0..150.0), rng.random_range(-150.0..150.0)]).collect()
}

fn gospa_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = SeedKey::new(KEY).with(1).rng();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (x, y) = (random_set(&mut rng), random_set(&mut rng));
        let got = gospa(&TargetSet::from_points(&x), &TargetSet::from_points(&y), C, 2.0).unwrap().total_sq;
        worst = worst.max((got - enumerate_gospa(&x, &y, C)).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(worst <= 1e-9 && secs < 10.0, format!("1000 pairs, max |gospa - enumeration| = {worst:.2e}, {secs:.2} s"))
}

fn bound_validity_check() -> Outcome {
    let t = Instant::now();
    let (ok, n) = bound_validity(C, 500, 10_000, SeedKey::new(KEY).with(2));
    let secs = t.elapsed().as_secs_f64();
    verdict(ok >= 499 && secs < 120.0, format!("{ok}/{n} posteriors within bound + 3 SE, {secs:.1} s"))
}

fn threshold_optimality() -> Outcome {
    // Same posteriors as the bound check.
    let posteriors = random_posteriors(C, 500, SeedKey::new(KEY).with(2).with(0));
    let mut worst = f64::NEG_INFINITY;
    for (r, cov) in &posteriors {
        let tr = cov.trace();
        let at_star = decomposed_cost(optimal_threshold(tr, C), *r, tr, C);
        for k in 0..=1000 {
            let g = k as f64 / 1000.0;
            worst = worst.max(at_star - decomposed_cost(g, *r, tr, C));
        }
    }
    verdict(worst <= 1e-9, format!("500 posteriors, largest grid improvement over the optimal threshold = {worst:.2e}"))
}

fn gauss2(mean: [f64; 2], cov: [f64; 3]) -> Gaussian {
    Gaussian::new(
        DVector::from_vec(mean.to_vec()),
        DMatrix::from_row_slice(2, 2, &[cov[0], cov[1], cov[1], cov[2]]),
    )
    .unwrap()
}

/// `p_D ∫_FOV N(x; m, P) dx` by the midpoint rule at resolution δ/500.
fn pd_quadrature(g: &Gaussian, s: &SensorState) -> f64 {
    let h = s.fov_radius / 500.0;
    let n = 1000;
    let mut total = 0.0;
    for i in 0..n {
        let x = s.position[0] - s.fov_radius + (i as f64 + 0.5) * h;
        for j in 0..n {
            let y = s.position[1] - s.fov_radius + (j as f64 + 0.5) * h;
            let (dx, dy) = (x - s.position[0], y - s.position[1]);
            if dx * dx + dy * dy <= s.fov_radius * s.fov_radius {
                total += log_normal_pdf(&DVector::from_vec(vec![x, y]), &g.mean, &g.cov).unwrap().exp();
            }
        }
    }
    total * h * h * s.p_d
}

fn pd_accuracy() -> Outcome {
    let s = SensorState {
        position: [0.0, 0.0],
        fov_radius: 40.0,
        step_size: 10.0,
        num_actions: 6,
        p_d: 0.9,
    };
    let mut rng = SeedKey::new(KEY).with(4).rng();
    let mut worst = 0.0f64;
    for k in 0..50 {
        // Centre distance by class: inside, near the boundary, outside.
        let dist = match k % 3 {
            0 => rng.random_range(0.0..25.0),
            1 => rng.random_range(30.0..50.0),
            _ => rng.random_range(55.0..90.0),
        };
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let (a, b) = (rng.random_range(4.0..900.0), rng.random_range(4.0..900.0));
        let rho = rng.random_range(-0.8..0.8);
        let g = gauss2([dist * angle.cos(), dist * angle.sin()], [a, rho * (a * b).sqrt(), b]);
        let est = expected_pd(&g, &s, 10_000, PdMethod::Auto, &mut rng).unwrap();
        worst = worst.max((est - pd_quadrature(&g, &s)).abs());
    }

    // O(I^{-1/2}): the spread of the estimate shrinks tenfold from I = 10² to 10⁴.
    let g = gauss2([35.0, 0.0], [300.0, 50.0, 200.0]);
    let mut sd = |samples: usize| {
        let v: Vec<f64> = (0..100)
            .map(|_| expected_pd(&g, &s, samples, PdMethod::Auto, &mut rng).unwrap())
            .collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let ratio = sd(100) / sd(10_000);
    verdict(
        worst <= 0.01 && (7.0..=13.0).contains(&ratio),
        format!("50 configurations, max error {worst:.4}; std ratio I=1e2/1e4 = {ratio:.2}"),
    )
}

fn random_gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Gaussian {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let cov = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5;
    Gaussian::new(DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)), cov).unwrap()
}

fn kl_closed_form() -> Outcome {
    let mut rng = SeedKey::new(KEY).with(5).rng();
    let mut passed = 0;
    let n = 1_000_000;
    for k in 0..20 {
        let dim = 2 + k % 3;
        let (pred, post) = (random_gaussian(dim, &mut rng), random_gaussian(dim, &mut rng));
        // 14 pairs with interior existence, 3 with r = 1 and 3 with r = 0.
        let (r_pred, r_post) = match k {
            0..=13 => (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)),
            14..=16 => (1.0, 1.0),
            _ => (0.0, 0.0),
        };
        let closed = bernoulli_gaussian_kl((r_post, &post), (r_pred, &pred)).unwrap();
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = if rng.random::<f64>() < r_pred {
                let x = pred.sample(&mut rng);
                let lp = log_normal_pdf(&x, &pred.mean, &pred.cov).unwrap();
                let lq = log_normal_pdf(&x, &post.mean, &post.cov).unwrap();
                (r_pred / r_post).ln() + lp - lq
            } else {
                ((1.0 - r_pred) / (1.0 - r_post)).ln()
            };
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
        if (mean - closed).abs() <= 3.0 * se + 1e-12 {
            passed += 1;
        }
    }
    verdict(passed == 20, format!("{passed}/20 pairs within 3 SE of a 1e6-sample estimate"))
}

fn planner_oracle() -> Outcome {
    let (_, cfg) = config("oracle_small.json");
    planner_equivalence(&cfg, 10).unwrap_or_else(|e| Outcome::Fail(e.to_string()))
}

fn batch<'a>(batches: &'a [PolicyBatch], label: &str) -> &'a PolicyBatch {
    batches.iter().find(|b| b.policy == label).expect("policy in comparison")
}

fn obstacle_reproduction() -> Outcome {
    let t = Instant::now();
    let (_, cfg) = config("obstacle.json");
    let batches = run_comparison(&cfg, &policies(&["ns", "gd", "kl", "mcts-10:discount=0.7"]), None).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let rms = |l| batch(&batches, l).rms.overall;
    let tail = |l| batch(&batches, l).rms_after_trap.unwrap_or(f64::NAN);
    let gain = 1.0 - rms("mcts-10") / rms("gd");
    let stuck = ["ns", "gd", "kl"].iter().all(|l| tail(l) > 0.55 * C);
    verdict(
        gain >= 0.2 && stuck && secs < 1800.0,
        format!(
            "RMS ns {:.2} gd {:.2} kl {:.2} mcts-10 {:.2} (mcts {:.1}% below gd); after trap ns {:.2} gd {:.2} kl {:.2} (need > {:.0}); {secs:.0} s",
            rms("ns"),
            rms("gd"),
            rms("kl"),
            rms("mcts-10"),
            100.0 * gain,
            tail("ns"),
            tail("gd"),
            tail("kl"),
            0.55 * C
        ),
    )
}

fn no_obstacle_reproduction() -> Outcome {
    let (_, cfg) = config("no_obstacle.json");
    let batches = run_comparison(&cfg, &policies(&["ns", "gd", "mcts-10:discount=0.7"]), None).unwrap();
    let v: Vec<f64> = batches.iter().map(|b| b.rms.overall).collect();
    let (lo, hi) = (v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(0.0, f64::max));
    let spread = hi / lo - 1.0;
    verdict(
        spread <= 0.08,
        format!("RMS ns {:.2} gd {:.2} mcts-10 {:.2}, spread {:.1}%", v[0], v[1], v[2], 100.0 * spread),
    )
}

fn determinism() -> Outcome {
    let (path, _) = config("obstacle.json");
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let code = gospa_sm_cli::main_with_args([
            "gospa-sm",
            "compare",
            "--config",
            path.to_str().unwrap(),
            "--runs",
            "3",
            "--policy",
            "gd",
            "--policy",
            "mcts-10",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        std::fs::read(out.join("metrics.csv")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    verdict(a == b && !a.is_empty(), format!("two compare runs, metrics.csv {} bytes, identical: {}", a.len(), a == b))
}

fn timing_order() -> Outcome {
    let (_, mut cfg) = config("obstacle.json");
    cfg.mc_runs = 3;
    let labels = ["ns", "gd", "mcts-10", "mcts-50", "mcts-150"];
    let batches = run_comparison(&cfg, &policies(&labels), Some(1)).unwrap();
    let ms: Vec<f64> = labels.iter().map(|l| 1e3 * batch(&batches, l).mean_step_seconds).collect();
    let ok = ms[0] < ms[1] && ms[1] <= ms[2] && ms[2] < ms[3] && ms[3] < ms[4];
    let shown: Vec<String> = labels.iter().zip(&ms).map(|(l, m)| format!("{l} {m:.2}")).collect();
    verdict(ok, format!("mean ms per step: {}", shown.join(", ")))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("gospa oracle equivalence", gospa_equivalence),
        ("bound validity", bound_validity_check),
        ("threshold optimality", threshold_optimality),
        ("expected_pd accuracy", pd_accuracy),
        ("kl closed form", kl_closed_form),
        ("planner oracle", planner_oracle),
        ("obstacle scenario", obstacle_reproduction),
        ("no-obstacle scenario", no_obstacle_reproduction),
        ("determinism", determinism),
        ("timing order", timing_order),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = check();
        failed += usize::from(outcome.failed());
        println!("[{}] {name}: {outcome}", i + 1);
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
