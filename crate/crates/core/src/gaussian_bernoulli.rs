//! Gaussian-mixture Bernoulli filter.
//!
//! A Bernoulli density holds an existence probability `r` and a weighted
//! Gaussian mixture for the single-target state. Prediction mixes the birth
//! Gaussian with Kalman-predicted survivors; the update combines a
//! misdetection hypothesis with one Kalman update per measurement against a
//! spatially uniform clutter intensity.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::gospa_metric::TargetSet;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Symmetrise and clamp negative eigenvalues to zero.
pub fn repair_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    if sym.clone().cholesky().is_some() {
        return sym;
    }
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    (&out + out.transpose()) * 0.5
}

/// A matrix `L` with `L Lᵀ = cov`: Cholesky when possible, otherwise the
/// eigen square root.
pub fn covariance_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = cov.clone().cholesky() {
        return ch.l();
    }
    let eig = cov.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Gaussian density with a PSD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    /// Builds a Gaussian, repairing the covariance to be symmetric PSD.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        Ok(Gaussian {
            cov: repair_psd(&cov),
            mean,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws one sample. Works for singular covariances.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.dim();
        let white = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + covariance_sqrt(&self.cov) * white
    }

    /// Marginal over the given state indices.
    pub fn marginal(&self, indices: &[usize]) -> Gaussian {
        let mean = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(indices.len(), indices.len(), |a, b| {
            self.cov[(indices[a], indices[b])]
        });
        Gaussian { mean, cov }
    }
}

/// `ln N(x; mean, cov)`. Errors when `cov` is not positive definite.
pub fn log_normal_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(Error::Singular("innovation covariance"))?;
    let diff = x - mean;
    let solved = chol.solve(&diff);
    let maha = diff.dot(&solved);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Ok(-0.5 * (maha + log_det + x.len() as f64 * LN_2PI))
}

/// Which covariance entries enter `tr(P)` in the detection threshold and the
/// planning bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceScope {
    #[default]
    Position,
    Full,
}

/// Trace rule: scope plus the positional indices of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRule {
    pub scope: TraceScope,
    pub positions: Vec<usize>,
}

impl TraceRule {
    pub fn position(positions: Vec<usize>) -> Self {
        TraceRule {
            scope: TraceScope::Position,
            positions,
        }
    }

    pub fn full() -> Self {
        TraceRule {
            scope: TraceScope::Full,
            positions: Vec::new(),
        }
    }

    pub fn trace(&self, cov: &DMatrix<f64>) -> f64 {
        match self.scope {
            TraceScope::Full => cov.trace(),
            TraceScope::Position => self.positions.iter().map(|&i| cov[(i, i)]).sum(),
        }
    }
}

impl Default for TraceRule {
    fn default() -> Self {
        TraceRule::position(vec![0, 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGaussian {
    pub weight: f64,
    pub gaussian: Gaussian,
}

/// Bernoulli density: existence probability and normalised Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliDensity {
    pub r: f64,
    pub components: Vec<WeightedGaussian>,
}

impl BernoulliDensity {
    pub fn new(r: f64, components: Vec<WeightedGaussian>) -> Result<Self> {
        check_probability("r", r)?;
        let mut d = BernoulliDensity { r, components };
        d.normalise();
        Ok(d)
    }

    pub fn single(r: f64, gaussian: Gaussian) -> Result<Self> {
        Self::new(r, vec![WeightedGaussian { weight: 1.0, gaussian }])
    }

    /// No target and no spatial information.
    pub fn empty() -> Self {
        BernoulliDensity {
            r: 0.0,
            components: Vec::new(),
        }
    }

    /// Highest-weighted component; ties keep the earliest.
    pub fn top(&self) -> Option<&Gaussian> {
        self.components
            .iter()
            .fold(None::<&WeightedGaussian>, |best, c| match best {
                Some(b) if b.weight >= c.weight => Some(b),
                _ => Some(c),
            })
            .map(|c| &c.gaussian)
    }

    fn normalise(&mut self) {
        self.components.retain(|c| c.weight > 0.0);
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if total > 0.0 {
            for c in &mut self.components {
                c.weight /= total;
            }
        }
    }
}

/// Motion model: linear-Gaussian transition plus Bernoulli birth/death.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub survival: f64,
    pub birth_prob: f64,
    pub birth: Gaussian,
}

impl MotionModel {
    pub fn new(
        transition: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        survival: f64,
        birth_prob: f64,
        birth: Gaussian,
    ) -> Result<Self> {
        check_probability("p_S", survival)?;
        check_probability("p_B", birth_prob)?;
        let n = birth.dim();
        for m in [&transition, &process_noise] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.nrows(),
                });
            }
        }
        Ok(MotionModel {
            transition,
            process_noise: repair_psd(&process_noise),
            survival,
            birth_prob,
            birth,
        })
    }

    /// Nearly-constant-velocity model on `[px, vx, py, vy]`.
    pub fn constant_velocity(
        tau: f64,
        q: f64,
        survival: f64,
        birth_prob: f64,
        birth: Gaussian,
    ) -> Result<Self> {
        let (t2, t3) = (tau * tau / 2.0, tau * tau * tau / 3.0);
        #[rustfmt::skip]
        let f = DMatrix::from_row_slice(4, 4, &[
            1.0, tau, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, tau,
            0.0, 0.0, 0.0, 1.0,
        ]);
        #[rustfmt::skip]
        let qm = DMatrix::from_row_slice(4, 4, &[
            t3,  t2,  0.0, 0.0,
            t2,  tau, 0.0, 0.0,
            0.0, 0.0, t3,  t2,
            0.0, 0.0, t2,  tau,
        ]) * q;
        Self::new(f, qm, survival, birth_prob, birth)
    }

    pub fn predict_gaussian(&self, g: &Gaussian) -> Gaussian {
        let f = &self.transition;
        Gaussian {
            mean: f * &g.mean,
            cov: repair_psd(&(f * &g.cov * f.transpose() + &self.process_noise)),
        }
    }
}

/// Linear-Gaussian measurement model `z = Hx + b + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSensor {
    pub observation: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl LinearSensor {
    pub fn new(observation: DMatrix<f64>, noise: DMatrix<f64>) -> Result<Self> {
        let m = observation.nrows();
        let bias = DVector::zeros(m);
        Self::with_bias(observation, noise, bias)
    }

    pub fn with_bias(
        observation: DMatrix<f64>,
        noise: DMatrix<f64>,
        bias: DVector<f64>,
    ) -> Result<Self> {
        let m = observation.nrows();
        if noise.nrows() != m || noise.ncols() != m || bias.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: noise.nrows(),
            });
        }
        if noise.clone().cholesky().is_none() {
            return Err(Error::Singular("measurement noise R"));
        }
        Ok(LinearSensor {
            observation,
            noise,
            bias,
        })
    }

    /// Position-only observation of `[px, vx, py, vy]` with isotropic noise.
    pub fn position_ncv(noise_var: f64) -> Result<Self> {
        #[rustfmt::skip]
        let h = DMatrix::from_row_slice(2, 4, &[
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        ]);
        Self::new(h, DMatrix::identity(2, 2) * noise_var)
    }

    pub fn predicted_measurement(&self, g: &Gaussian) -> (DVector<f64>, DMatrix<f64>) {
        let h = &self.observation;
        let z_hat = h * &g.mean + &self.bias;
        let s = h * &g.cov * h.transpose() + &self.noise;
        (z_hat, (&s + s.transpose()) * 0.5)
    }
}

/// Kalman update pieces for one component.
pub(crate) struct Innovation {
    pub z_hat: DVector<f64>,
    pub s: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub updated_cov: DMatrix<f64>,
}

pub(crate) fn innovation(g: &Gaussian, sensor: &LinearSensor) -> Result<Innovation> {
    let (z_hat, s) = sensor.predicted_measurement(g);
    let s_inv = s
        .clone()
        .cholesky()
        .ok_or(Error::Singular("innovation covariance"))?
        .inverse();
    let pht = &g.cov * sensor.observation.transpose();
    let gain = &pht * s_inv;
    let updated_cov = repair_psd(&(&g.cov - &gain * pht.transpose()));
    Ok(Innovation {
        z_hat,
        s,
        gain,
        updated_cov,
    })
}

/// Bernoulli prediction.
///
/// `r' = p_B (1 - r) + p_S r`; the birth Gaussian carries weight
/// `p_B (1 - r) / r'` and each Kalman-predicted component `p_S r w_i / r'`.
pub fn predict(prior: &BernoulliDensity, model: &MotionModel) -> BernoulliDensity {
    let born = model.birth_prob * (1.0 - prior.r);
    let survived = model.survival * prior.r;
    let r = born + survived;
    if r <= 0.0 {
        return BernoulliDensity::empty();
    }
    let mut components = Vec::with_capacity(prior.components.len() + 1);
    if born > 0.0 {
        components.push(WeightedGaussian {
            weight: born / r,
            gaussian: model.birth.clone(),
        });
    }
    if survived > 0.0 {
        components.extend(prior.components.iter().map(|c| WeightedGaussian {
            weight: survived * c.weight / r,
            gaussian: model.predict_gaussian(&c.gaussian),
        }));
    }
    let mut out = BernoulliDensity {
        r: r.min(1.0),
        components,
    };
    out.normalise();
    out
}

/// Bernoulli update with a single expected detection probability.
pub fn update(
    pred: &BernoulliDensity,
    measurements: &[DVector<f64>],
    sensor: &LinearSensor,
    pd_bar: f64,
    clutter_intensity: f64,
) -> Result<BernoulliDensity> {
    let pds = vec![pd_bar; pred.components.len()];
    update_with_component_pd(pred, measurements, sensor, &pds, clutter_intensity)
}

/// Bernoulli update where each mixture component carries its own expected
/// detection probability.
///
/// With a single component and a single measurement this reduces to
/// `r' = (1 - p (1 - N/λ)) r / (1 - r p (1 - N/λ))`. With zero clutter
/// intensity at most one measurement is admissible and a detection forces
/// `r' = 1`.
pub fn update_with_component_pd(
    pred: &BernoulliDensity,
    measurements: &[DVector<f64>],
    sensor: &LinearSensor,
    component_pd: &[f64],
    clutter_intensity: f64,
) -> Result<BernoulliDensity> {
    if component_pd.len() != pred.components.len() {
        return Err(Error::DimensionMismatch {
            expected: pred.components.len(),
            found: component_pd.len(),
        });
    }
    for &p in component_pd {
        check_probability("pD_bar", p)?;
    }
    if !(clutter_intensity >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "clutter_intensity",
            reason: format!("must be non-negative, got {clutter_intensity}"),
        });
    }
    if clutter_intensity == 0.0 && measurements.len() > 1 {
        return Err(Error::TooManyMeasurementsWithoutClutter(measurements.len()));
    }
    let m = sensor.observation.nrows();
    if let Some(z) = measurements.iter().find(|z| z.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: z.len(),
        });
    }
    if pred.components.is_empty() {
        return Ok(pred.clone());
    }

    let mut miss = Vec::with_capacity(pred.components.len());
    let mut detect = Vec::new();
    let innovations = if measurements.is_empty() {
        Vec::new()
    } else {
        pred.components
            .iter()
            .map(|c| innovation(&c.gaussian, sensor))
            .collect::<Result<Vec<_>>>()?
    };

    for (i, c) in pred.components.iter().enumerate() {
        miss.push(WeightedGaussian {
            weight: (1.0 - component_pd[i]) * c.weight,
            gaussian: c.gaussian.clone(),
        });
    }
    for z in measurements {
        for (i, c) in pred.components.iter().enumerate() {
            if component_pd[i] == 0.0 {
                continue;
            }
            let inn = &innovations[i];
            let likelihood = log_normal_pdf(z, &inn.z_hat, &inn.s)?.exp();
            let mut weight = component_pd[i] * c.weight * likelihood;
            if clutter_intensity > 0.0 {
                weight /= clutter_intensity;
            }
            if weight > 0.0 {
                let mean = &c.gaussian.mean + &inn.gain * (z - &inn.z_hat);
                detect.push(WeightedGaussian {
                    weight,
                    gaussian: Gaussian {
                        mean,
                        cov: inn.updated_cov.clone(),
                    },
                });
            }
        }
    }

    if clutter_intensity == 0.0 && !measurements.is_empty() {
        if detect.is_empty() {
            return Err(Error::ImpossibleMeasurement);
        }
        let mut out = BernoulliDensity {
            r: 1.0,
            components: detect,
        };
        out.normalise();
        return Ok(out);
    }

    let mass: f64 = miss.iter().chain(detect.iter()).map(|c| c.weight).sum();
    if mass <= 0.0 {
        // Certain detection that did not happen: the target cannot exist.
        return Ok(BernoulliDensity {
            r: 0.0,
            components: pred.components.clone(),
        });
    }
    let r = (mass * pred.r / (1.0 - pred.r + mass * pred.r)).clamp(0.0, 1.0);
    let mut components = miss;
    components.extend(detect);
    let mut out = BernoulliDensity { r, components };
    out.normalise();
    Ok(out)
}

/// Greedy moment-preserving merge. Starting from the heaviest component,
/// every remaining component whose mean lies within squared Mahalanobis
/// distance `threshold` under both its own and the head's covariance is
/// folded into one Gaussian with the group's mean and covariance, spread term
/// included. Checking both covariances keeps a diffuse component from
/// swallowing, or being swallowed by, a sharp one nearby.
pub fn merge_components(density: &BernoulliDensity, threshold: f64) -> BernoulliDensity {
    let mut left: Vec<&WeightedGaussian> = density.components.iter().collect();
    left.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    let mut merged = Vec::with_capacity(left.len());
    while let Some(&head) = left.first() {
        let (group, rest): (Vec<_>, Vec<_>) = left.iter().enumerate().partition(|&(i, c)| {
            if i == 0 {
                return true;
            }
            let d = &c.gaussian.mean - &head.gaussian.mean;
            [&c.gaussian.cov, &head.gaussian.cov].iter().all(|p| match (*p).clone().cholesky() {
                Some(ch) => d.dot(&ch.solve(&d)) <= threshold,
                None => false,
            })
        });
        let group: Vec<&WeightedGaussian> = group.into_iter().map(|(_, &c)| c).collect();
        let rest: Vec<&WeightedGaussian> = rest.into_iter().map(|(_, &c)| c).collect();
        left = rest;
        if group.len() == 1 {
            merged.push(head.clone());
            continue;
        }
        let weight: f64 = group.iter().map(|c| c.weight).sum();
        let mean = group
            .iter()
            .fold(DVector::zeros(head.gaussian.dim()), |acc, c| acc + &c.gaussian.mean * c.weight)
            / weight;
        let n = mean.len();
        let cov = group.iter().fold(DMatrix::zeros(n, n), |acc, c| {
            let d = &c.gaussian.mean - &mean;
            acc + (&c.gaussian.cov + &d * d.transpose()) * c.weight
        }) / weight;
        merged.push(WeightedGaussian {
            weight,
            gaussian: Gaussian {
                mean,
                cov: repair_psd(&cov),
            },
        });
    }
    let mut out = BernoulliDensity {
        r: density.r,
        components: merged,
    };
    out.normalise();
    out
}

/// Prunes components below `prune_threshold`, keeps the `max_components`
/// heaviest and renormalises. The heaviest component always survives.
pub fn reduce(
    density: &BernoulliDensity,
    max_components: usize,
    prune_threshold: f64,
) -> BernoulliDensity {
    let max_components = max_components.max(1);
    if density.components.is_empty() {
        return density.clone();
    }
    let mut order: Vec<usize> = (0..density.components.len()).collect();
    order.sort_by(|&a, &b| {
        density.components[b]
            .weight
            .total_cmp(&density.components[a].weight)
    });
    let components: Vec<WeightedGaussian> = order
        .iter()
        .enumerate()
        .filter(|&(rank, &i)| rank == 0 || density.components[i].weight >= prune_threshold)
        .take(max_components)
        .map(|(_, &i)| density.components[i].clone())
        .collect();
    let mut out = BernoulliDensity {
        r: density.r,
        components,
    };
    out.normalise();
    out
}

/// Detection threshold minimising the MSGOSPA bound for a posterior whose
/// relevant covariance trace is `trace`.
pub fn optimal_threshold(trace: f64, c: f64) -> f64 {
    1.0 / (2.0 - (2.0 * trace / (c * c)).min(1.0))
}

/// Set estimate: the heaviest component's mean when `r` reaches the optimal
/// detection threshold, otherwise the empty set.
pub fn extract_estimate(density: &BernoulliDensity, c: f64, rule: &TraceRule) -> TargetSet {
    match density.top() {
        Some(g) if density.r >= optimal_threshold(rule.trace(&g.cov), c) => {
            TargetSet::singleton(g.mean.clone())
        }
        _ => TargetSet::empty(),
    }
}
