//! Losses, the Adam optimizer, gradient noise and the mini-batch loop.

mod adam;
mod loss;
mod noise;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{accuracy, argmax_column, cross_entropy_loss, mse_loss, LossKind};
pub use noise::add_gradient_noise;
pub use trainer::{evaluate, oscillation_metric, train, EpochMetrics, Evaluation, MetricsLog, Schedule, TrainConfig};
