//! Sensor geometry: circular field of view, the action ring, obstacles,
//! expected detection probability and measurement generation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, UnitDisc};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::gaussian_bernoulli::{Gaussian, LinearSensor};
use crate::gospa_metric::TargetSet;

pub type Point = [f64; 2];

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Sensor platform with a circular FOV of constant detection probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorState {
    pub position: Point,
    pub fov_radius: f64,
    pub step_size: f64,
    pub num_actions: usize,
    pub p_d: f64,
}

impl SensorState {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                })
            }
        };
        positive("fov_radius", self.fov_radius)?;
        positive("step_size", self.step_size)?;
        if self.num_actions == 0 {
            return Err(Error::InvalidParameter {
                name: "num_actions",
                reason: "must be at least 1".into(),
            });
        }
        check_probability("p_d", self.p_d)
    }

    pub fn moved_to(&self, position: Point) -> SensorState {
        SensorState { position, ..*self }
    }

    /// `p_D` inside the closed FOV disc, zero outside.
    pub fn detection_probability(&self, target_position: Point) -> f64 {
        if dist(target_position, self.position) <= self.fov_radius {
            self.p_d
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseClass {
    Low,
    High,
}

/// Measurement noise covariance per noise class.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub low: DMatrix<f64>,
    pub high: DMatrix<f64>,
}

impl NoiseModel {
    /// Isotropic noise with the given per-axis variances.
    pub fn isotropic(low_var: f64, high_var: f64) -> Self {
        NoiseModel {
            low: DMatrix::identity(2, 2) * low_var,
            high: DMatrix::identity(2, 2) * high_var,
        }
    }

    pub fn covariance(&self, class: NoiseClass) -> &DMatrix<f64> {
        match class {
            NoiseClass::Low => &self.low,
            NoiseClass::High => &self.high,
        }
    }

    /// Position-only linear sensor on `[px, vx, py, vy]` for the class.
    pub fn linear_sensor(&self, class: NoiseClass) -> Result<LinearSensor> {
        #[rustfmt::skip]
        let h = DMatrix::from_row_slice(2, 4, &[
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        ]);
        LinearSensor::new(h, self.covariance(class).clone())
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::isotropic(10.0, 50.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub id: usize,
    pub target_position: Point,
    pub noise_class: NoiseClass,
}

/// Axis-aligned rectangle, closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Result<Self> {
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(Error::InvalidParameter {
                name: "bounds",
                reason: format!("min {min:?} must be below max {max:?}"),
            });
        }
        Ok(Rect { min, max })
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.min[0]..=self.max[0]).contains(&p[0]) && (self.min[1]..=self.max[1]).contains(&p[1])
    }

    pub fn centre(&self) -> Point {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

/// Convex polygon, vertices in either winding order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
    orientation: f64,
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidParameter {
            name: "obstacle",
            reason: reason.to_string(),
        };
        let n = vertices.len();
        if n < 3 {
            return Err(invalid("a polygon needs at least 3 vertices"));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("vertex coordinates must be finite"));
        }
        let area2: f64 = (0..n)
            .map(|i| {
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum();
        if area2.abs() < 1e-12 {
            return Err(invalid("polygon has zero area"));
        }
        let orientation = area2.signum();
        for i in 0..n {
            let turn = cross(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if turn * orientation < -1e-9 {
                return Err(invalid("polygon is not convex"));
            }
        }
        Ok(ConvexPolygon {
            vertices,
            orientation,
        })
    }

    /// Axis-aligned square centred at `centre`.
    pub fn square(centre: Point, side: f64) -> Result<Self> {
        let h = side / 2.0;
        let [x, y] = centre;
        Self::new(vec![[x - h, y - h], [x + h, y - h], [x + h, y + h], [x - h, y + h]])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Closed containment: boundary points count as inside.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| cross(self.vertices[i], self.vertices[(i + 1) % n], p) * self.orientation >= 0.0)
    }
}

impl TryFrom<Vec<Point>> for ConvexPolygon {
    type Error = Error;

    fn try_from(v: Vec<Point>) -> Result<Self> {
        ConvexPolygon::new(v)
    }
}

impl From<ConvexPolygon> for Vec<Point> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObstacleMap {
    pub obstacles: Vec<ConvexPolygon>,
}

impl ObstacleMap {
    pub fn blocks(&self, p: Point) -> bool {
        self.obstacles.iter().any(|o| o.contains(p))
    }
}

/// Static environment constraining sensor motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub bounds: Rect,
    pub obstacles: ObstacleMap,
    /// Per-action noise classes; alternates low/high by index parity when unset.
    pub noise_classes: Option<Vec<NoiseClass>>,
}

impl Environment {
    pub fn open(bounds: Rect) -> Self {
        Environment {
            bounds,
            obstacles: ObstacleMap::default(),
            noise_classes: None,
        }
    }

    pub fn noise_class(&self, id: usize) -> NoiseClass {
        match &self.noise_classes {
            Some(classes) if id < classes.len() => classes[id],
            _ if id % 2 == 0 => NoiseClass::Low,
            _ => NoiseClass::High,
        }
    }

    pub fn is_feasible(&self, p: Point) -> bool {
        self.bounds.contains(p) && !self.obstacles.blocks(p)
    }
}

/// The stay-in-place pseudo-action used when every ring action is blocked.
pub fn stay_action(sensor: &SensorState) -> Action {
    Action {
        id: sensor.num_actions,
        target_position: sensor.position,
        noise_class: NoiseClass::Low,
    }
}

/// Every ring action, feasible or not, at angles `2πi / num_actions`.
pub fn ring_actions(sensor: &SensorState, env: &Environment) -> Vec<Action> {
    (0..sensor.num_actions)
        .map(|id| {
            let angle = 2.0 * PI * id as f64 / sensor.num_actions as f64;
            Action {
                id,
                target_position: [
                    sensor.position[0] + sensor.step_size * angle.cos(),
                    sensor.position[1] + sensor.step_size * angle.sin(),
                ],
                noise_class: env.noise_class(id),
            }
        })
        .collect()
}

/// Feasible actions in id order; never empty thanks to the stay fallback.
pub fn enumerate_actions(sensor: &SensorState, env: &Environment) -> Vec<Action> {
    let actions: Vec<Action> = ring_actions(sensor, env)
        .into_iter()
        .filter(|a| env.is_feasible(a.target_position))
        .collect();
    if actions.is_empty() {
        vec![stay_action(sensor)]
    } else {
        actions
    }
}

/// Estimator for the expected detection probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdMethod {
    /// Uniform samples over the FOV disc weighted by the Gaussian density,
    /// switching to Gaussian sampling when that has the smaller variance
    /// bound.
    #[default]
    Auto,
    /// Always uniform samples over the FOV disc.
    UniformFov,
    /// Samples from the Gaussian, counting those inside the FOV.
    GaussianSampling,
}

/// Closed-form 2-D Gaussian density.
#[derive(Debug, Clone, Copy)]
struct Pdf2 {
    mean: Point,
    inv: [f64; 3],
    norm: f64,
}

impl Pdf2 {
    fn new(g: &Gaussian) -> Option<Self> {
        let (a, b, d) = (g.cov[(0, 0)], g.cov[(0, 1)], g.cov[(1, 1)]);
        let det = a * d - b * b;
        if !(det > 0.0) {
            return None;
        }
        Some(Pdf2 {
            mean: [g.mean[0], g.mean[1]],
            inv: [d / det, -b / det, a / det],
            norm: 1.0 / (2.0 * PI * det.sqrt()),
        })
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.mean[0], y - self.mean[1]);
        let m = self.inv[0] * dx * dx + 2.0 * self.inv[1] * dx * dy + self.inv[2] * dy * dy;
        self.norm * (-0.5 * m).exp()
    }
}

/// Expected detection probability of a 2-D positional Gaussian for a sensor.
///
/// The uniform-FOV estimator is `p_D πδ² (1/I) Σ N(x_i; x̄, P)` with `x_i`
/// uniform on the disc. Its second moment is bounded by
/// `p_D² δ² / (4 sqrt(det P))`, against `p_D²` for sampling from the
/// Gaussian; `Auto` picks the estimator with the smaller bound. The result is
/// clamped to `[0, p_D]`.
pub fn expected_pd<R: Rng + ?Sized>(
    position_marginal: &Gaussian,
    sensor: &SensorState,
    num_samples: usize,
    method: PdMethod,
    rng: &mut R,
) -> Result<f64> {
    if position_marginal.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: position_marginal.dim(),
        });
    }
    if num_samples == 0 {
        return Err(Error::InvalidParameter {
            name: "pd_samples",
            reason: "must be at least 1".into(),
        });
    }
    let delta = sensor.fov_radius;
    let pdf = Pdf2::new(position_marginal);
    let use_uniform = match (method, &pdf) {
        (_, None) => false,
        (PdMethod::UniformFov, _) => true,
        (PdMethod::GaussianSampling, _) => false,
        (PdMethod::Auto, Some(p)) => {
            // 1 / (2π sqrt(det)) = norm, so the bound is δ² π norm / 2.
            delta * delta * PI * p.norm / 2.0 <= 1.0
        }
    };
    let estimate = if use_uniform {
        let pdf = pdf.expect("checked above");
        let [sx, sy] = sensor.position;
        let mut sum = 0.0;
        for _ in 0..num_samples {
            let [u, v]: [f64; 2] = UnitDisc.sample(rng);
            sum += pdf.eval(sx + delta * u, sy + delta * v);
        }
        sensor.p_d * PI * delta * delta * sum / num_samples as f64
    } else {
        let hits = (0..num_samples)
            .filter(|_| {
                let x = position_marginal.sample(rng);
                dist([x[0], x[1]], sensor.position) <= delta
            })
            .count();
        sensor.p_d * hits as f64 / num_samples as f64
    };
    Ok(estimate.clamp(0.0, sensor.p_d))
}

/// Measurements for one scan: at most one target detection followed by
/// Poisson clutter uniform over the FOV disc.
pub fn generate_measurements<R: Rng + ?Sized>(
    truth: &TargetSet,
    sensor: &SensorState,
    measurement: &LinearSensor,
    clutter_rate: f64,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    if !(clutter_rate >= 0.0 && clutter_rate.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "clutter_rate",
            reason: format!("must be non-negative, got {clutter_rate}"),
        });
    }
    let mut out = Vec::new();
    let noise = Gaussian {
        mean: DVector::zeros(measurement.noise.nrows()),
        cov: measurement.noise.clone(),
    };
    for x in truth.iter() {
        let pos = &measurement.observation * x;
        if rng.random::<f64>() < sensor.detection_probability([pos[0], pos[1]]) {
            out.push(pos + &measurement.bias + noise.sample(rng));
        }
    }
    if clutter_rate > 0.0 {
        let count = Poisson::new(clutter_rate)
            .map_err(|e| Error::InvalidParameter {
                name: "clutter_rate",
                reason: e.to_string(),
            })?
            .sample(rng) as usize;
        for _ in 0..count {
            let [u, v]: [f64; 2] = UnitDisc.sample(rng);
            out.push(DVector::from_vec(vec![
                sensor.position[0] + sensor.fov_radius * u,
                sensor.position[1] + sensor.fov_radius * v,
            ]));
        }
    }
    Ok(out)
}
