//! GOSPA-driven sensor management for a single-target Bernoulli filter.

pub mod error;
pub mod gaussian_bernoulli;
pub mod gospa_metric;
pub mod planners;
pub mod planning_costs;
pub mod rng;
pub mod sensor_models;
pub mod simulator;

pub use error::{Error, Result};
