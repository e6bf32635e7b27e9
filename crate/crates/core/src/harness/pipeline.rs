//! Glue between the configuration and the library stages.

use super::{ExperimentConfig, HarnessError, Scenario};
use crate::datagen::DatasetOptions;
use crate::harness::train::TrainHyper;
use crate::optimize::{run_trajectory, Method, Models, StepOptions, Trajectory};
use crate::spectral::endpoint_weights;

pub fn step_options(cfg: &ExperimentConfig) -> StepOptions {
    StepOptions {
        zeta: cfg.zeta,
        arena_half: cfg.clamp_to_arena.then_some(cfg.arena_half),
        mfl_update: cfg.mfl_update,
        weights: endpoint_weights(cfg.num_nodes()),
    }
}

pub fn dataset_options(cfg: &ExperimentConfig) -> DatasetOptions {
    DatasetOptions {
        steps: cfg.horizon,
        interval: cfg.snapshot_interval,
        step: step_options(cfg),
        seed: cfg.seed,
    }
}

pub fn mfl_hyper(cfg: &ExperimentConfig) -> TrainHyper {
    TrainHyper { lr: cfg.lr_mfl, epochs: cfg.epochs_mfl, batch_size: cfg.batch_size, seed: cfg.seed }
}

pub fn gl_hyper(cfg: &ExperimentConfig) -> TrainHyper {
    TrainHyper { lr: cfg.lr_gl, epochs: cfg.epochs_gl, batch_size: cfg.batch_size, seed: cfg.seed }
}

/// One trajectory of `cfg.horizon` steps per scenario.
pub fn run_trajectories(
    cfg: &ExperimentConfig,
    method: Method,
    models: Models<'_>,
    scenarios: &[Scenario],
) -> Result<Vec<Trajectory>, HarnessError> {
    let params = cfg.channel();
    let opts = step_options(cfg);
    scenarios
        .iter()
        .map(|s| Ok(run_trajectory(method, models, &params, s.id, &s.deployment, &opts, cfg.horizon)?))
        .collect()
}
