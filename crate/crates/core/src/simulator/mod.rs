//! Closed-loop simulation and Monte Carlo evaluation.

mod batch;
mod config;
mod episode;
mod output;
mod truth;

pub use batch::{run_batch, run_comparison, PolicyBatch};
pub use config::{
    FilterConfig, MotionConfig, PlanningConfig, ScenarioConfig, ScriptedLife, SensorConfig, TruthConfig,
    SCHEMA_VERSION,
};
pub use episode::{run_episode, run_episode_with_sensor_path, step_key, RunMetrics, StepRecord};
pub use output::{
    summarise, write_comparison_csv, write_metrics_csv, write_outputs, write_series_csv, PolicySummary, Summary,
    METRICS_HEADER,
};
pub use truth::{scripted_truth, step_truth, TruthProcess};
