//! GOSPA metric with α = 2 and p = 2 over a Euclidean positional base metric.
//!
//! With α = 2 the metric admits a missed/false/localisation decomposition:
//! `total_sq = loc_sq + missed_sq + false_sq`, where missed and false terms
//! are `c²/2` per unassigned truth or estimate element.
//!
//! Assigning a pair whose distance reaches `c` costs the same as leaving both
//! unassigned, so the minimisation can be written as a complete assignment of
//! the smaller set into the larger one with cost `min(d², c²)`. Small problems
//! are enumerated directly; larger ones go through a rectangular Hungarian
//! solver.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of injective maps we are willing to enumerate.
const ENUMERATION_LIMIT: u64 = 20_000;
/// Enumeration is used whenever the smaller set has at most this many elements
/// (and the enumeration itself stays under `ENUMERATION_LIMIT`).
const ENUMERATION_MAX_SMALL: usize = 5;

/// A finite set of target states. All elements share one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetSet {
    elements: Vec<DVector<f64>>,
}

impl TargetSet {
    pub fn new(elements: Vec<DVector<f64>>) -> Result<Self> {
        if let Some(first) = elements.first() {
            let dim = first.len();
            if let Some(bad) = elements.iter().find(|e| e.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: bad.len(),
                });
            }
        }
        Ok(TargetSet { elements })
    }

    pub fn empty() -> Self {
        TargetSet::default()
    }

    pub fn singleton(x: DVector<f64>) -> Self {
        TargetSet { elements: vec![x] }
    }

    pub fn from_points(points: &[[f64; 2]]) -> Self {
        TargetSet {
            elements: points
                .iter()
                .map(|p| DVector::from_column_slice(p))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.elements.first().map(|e| e.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.elements.iter()
    }

    pub fn elements(&self) -> &[DVector<f64>] {
        &self.elements
    }
}

/// Squared GOSPA value and its decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GospaResult {
    pub total_sq: f64,
    pub loc_sq: f64,
    pub missed_sq: f64,
    pub false_sq: f64,
    pub num_assigned: usize,
}

impl GospaResult {
    pub fn distance(&self) -> f64 {
        self.total_sq.sqrt()
    }
}

/// Positional indices used by default for a state of dimension `dim`.
///
/// Four-dimensional states are `[px, vx, py, vy]`; anything else is compared
/// on all of its components.
pub fn default_position_indices(dim: usize) -> Vec<usize> {
    if dim == 4 {
        vec![0, 2]
    } else {
        (0..dim).collect()
    }
}

/// GOSPA between `truth` and `estimate` using default positional indices.
pub fn gospa(truth: &TargetSet, estimate: &TargetSet, c: f64, p: f64) -> Result<GospaResult> {
    let dim = match (truth.dim(), estimate.dim()) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::DimensionMismatch {
                expected: a,
                found: b,
            })
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => 0,
    };
    gospa_on(truth, estimate, c, p, &default_position_indices(dim))
}

/// GOSPA where the base distance uses only the components in `positions`.
pub fn gospa_on(
    truth: &TargetSet,
    estimate: &TargetSet,
    c: f64,
    p: f64,
    positions: &[usize],
) -> Result<GospaResult> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::NonPositiveCutoff(c));
    }
    if p != 2.0 {
        return Err(Error::UnsupportedExponent(p));
    }
    if let (Some(a), Some(b)) = (truth.dim(), estimate.dim()) {
        if a != b {
            return Err(Error::DimensionMismatch {
                expected: a,
                found: b,
            });
        }
    }
    if let Some(dim) = truth.dim().or(estimate.dim()) {
        if let Some(&bad) = positions.iter().find(|&&i| i >= dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad + 1,
            });
        }
    }

    let c_sq = c * c;
    let half = 0.5 * c_sq;
    let (n_x, n_y) = (truth.len(), estimate.len());

    // Rows index the smaller set.
    let transposed = n_x > n_y;
    let (rows, cols) = if transposed {
        (estimate, truth)
    } else {
        (truth, estimate)
    };
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| {
            cols.iter()
                .map(|b| squared_distance(a, b, positions))
                .collect()
        })
        .collect();

    let assignment = if rows.is_empty() {
        Vec::new()
    } else if rows.len() <= ENUMERATION_MAX_SMALL
        && injective_count(cols.len(), rows.len()) <= ENUMERATION_LIMIT
    {
        enumerate_best(&cost, c_sq)
    } else {
        let truncated: Vec<Vec<f64>> = cost
            .iter()
            .map(|row| row.iter().map(|&d| d.min(c_sq)).collect())
            .collect();
        hungarian(&truncated)
    };

    let mut loc_sq = 0.0;
    let mut num_assigned = 0;
    for (i, &j) in assignment.iter().enumerate() {
        let d = cost[i][j];
        if d < c_sq {
            loc_sq += d;
            num_assigned += 1;
        }
    }
    let missed_sq = half * (n_x - num_assigned) as f64;
    let false_sq = half * (n_y - num_assigned) as f64;
    Ok(GospaResult {
        total_sq: loc_sq + missed_sq + false_sq,
        loc_sq,
        missed_sq,
        false_sq,
        num_assigned,
    })
}

fn squared_distance(a: &DVector<f64>, b: &DVector<f64>, positions: &[usize]) -> f64 {
    positions
        .iter()
        .map(|&i| {
            let d = a[i] - b[i];
            d * d
        })
        .sum()
}

fn injective_count(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul((n - i) as u64))
}

/// Best injective row → column map under `min(cost, cap)`. Ties keep the
/// lexicographically first map.
fn enumerate_best(cost: &[Vec<f64>], cap: f64) -> Vec<usize> {
    fn recurse(
        row: usize,
        cost: &[Vec<f64>],
        cap: f64,
        used: &mut [bool],
        current: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        if acc >= best.0 {
            return;
        }
        if row == cost.len() {
            *best = (acc, current.clone());
            return;
        }
        for j in 0..used.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            current.push(j);
            recurse(row + 1, cost, cap, used, current, acc + cost[row][j].min(cap), best);
            current.pop();
            used[j] = false;
        }
    }

    let mut used = vec![false; cost[0].len()];
    let mut best = (f64::INFINITY, Vec::new());
    recurse(0, cost, cap, &mut used, &mut Vec::new(), 0.0, &mut best);
    best.1
}

/// Rectangular min-cost assignment (rows ≤ columns) by shortest augmenting
/// paths with potentials. Returns the column assigned to each row.
pub(crate) fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian expects rows <= columns");

    // 1-based arrays; index 0 is the virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut row_of = vec![0usize; m + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// RMS-GOSPA aggregates over a grid of runs × steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsGospa {
    pub overall: f64,
    pub overall_loc: f64,
    pub overall_missed: f64,
    pub overall_false: f64,
    pub per_step: Vec<f64>,
    pub per_step_loc: Vec<f64>,
    pub per_step_missed: Vec<f64>,
    pub per_step_false: Vec<f64>,
}

/// RMS-GOSPA per step (root of the mean over runs) and over all steps.
///
/// The decomposed series are the roots of the mean of each squared part, so
/// they do not add up to the total series.
pub fn rms_gospa(per_run: &[Vec<GospaResult>]) -> Result<RmsGospa> {
    let steps = per_run
        .first()
        .map(|r| r.len())
        .ok_or(Error::EmptyInput("no runs"))?;
    if steps == 0 {
        return Err(Error::EmptyInput("no steps"));
    }
    for (run, series) in per_run.iter().enumerate() {
        if series.len() != steps {
            return Err(Error::RaggedGrid {
                run,
                expected: steps,
                found: series.len(),
            });
        }
    }

    let n = per_run.len() as f64;
    let column_mean = |k: usize, part: fn(&GospaResult) -> f64| {
        per_run.iter().map(|r| part(&r[k])).sum::<f64>() / n
    };
    let parts: [fn(&GospaResult) -> f64; 4] = [
        |g| g.total_sq,
        |g| g.loc_sq,
        |g| g.missed_sq,
        |g| g.false_sq,
    ];
    let means: Vec<Vec<f64>> = parts
        .iter()
        .map(|&part| (0..steps).map(|k| column_mean(k, part)).collect())
        .collect();
    let overall = |m: &[f64]| (m.iter().sum::<f64>() / steps as f64).sqrt();
    let roots = |m: &[f64]| m.iter().map(|v| v.sqrt()).collect::<Vec<_>>();

    Ok(RmsGospa {
        overall: overall(&means[0]),
        overall_loc: overall(&means[1]),
        overall_missed: overall(&means[2]),
        overall_false: overall(&means[3]),
        per_step: roots(&means[0]),
        per_step_loc: roots(&means[1]),
        per_step_missed: roots(&means[2]),
        per_step_false: roots(&means[3]),
    })
}
