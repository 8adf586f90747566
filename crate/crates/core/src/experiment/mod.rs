//! Experiment configuration, training, evaluation, ablation and the
//! command implementations behind the binary.

mod commands;
mod config;
mod eval;
mod model;
mod train;

pub use commands::*;
pub use config::{EvalConfig, ExperimentConfig, TrainingConfig};
pub use eval::{evaluate, export_features, merge_masks, EvalReport, EvalSpec, SpecResult};
pub use model::{AsfModel, Inference};
pub use train::{train, training_combos, LossRow, TrainReport, LOSS_HEADER};
