//! Optimization loop: render, loss, backward, Adam, and the densification /
//! re-activation schedule.

mod adam;
mod config;
mod run;
mod schedule;

pub use adam::{resize_optimizer, AdamState, Hyper, Moments, StepRates, BETA1, BETA2, EPSILON};
pub use config::{apply_override, parse_config, LearningRates, TrainConfig, DESK_TAU_REFERENCE_WIDTH};
pub use run::{
    cloud_from_points, evaluate, train, train_with, EvalMetrics, MetricsRecord, NullObserver, TrainObserver,
    TrainOutcome,
};
pub use schedule::{EventKind, Schedule};
