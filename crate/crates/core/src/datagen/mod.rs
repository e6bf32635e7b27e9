//! Training-data generation: PPO-guided (RLGP), random-walk (RW) and
//! WCC-guided trajectories, subsampled into labelled snapshots.

mod dataset;
mod ppo;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::channel::ChannelError;
use crate::nn::NnError;
use crate::optimize::OptimizeError;
use crate::records::RecordError;
use crate::spectral::SpectralError;

pub use dataset::{
    generate_dataset, generate_dataset_file, read_dataset, sample_line, write_dataset, DatasetOptions, Sample,
};
pub use ppo::{
    clip, compute_advantages, gaussian_log_density, policy_ratios, ppo_rollout_epoch, ppo_update, surrogate,
    train_ppo, BufferEntry, PpoAgent, PpoReport, UpdateStats,
};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("non-finite {what} at epoch {epoch}: {detail}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        detail: String,
    },
    #[error("invalid PPO configuration: {0}")]
    Config(String),
    #[error("no start deployments given")]
    EmptyPool,
}

/// PPO hyperparameters. One epoch collects `phi` segments of `horizon`
/// steps, each starting from a deployment in the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub tau: f64,
    pub horizon: usize,
    pub phi: usize,
    pub inner_epochs: usize,
    pub max_epochs: usize,
    pub zeta: f64,
    pub batch_size: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Moving-average window for the convergence stop; 0 disables it.
    pub converge_window: usize,
    pub converge_tol: f64,
    /// Relays are clamped into `[−h, h]²` after each move when set.
    pub arena_half: Option<f64>,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.9,
            tau: 0.2,
            horizon: 400,
            phi: 5,
            inner_epochs: 10,
            max_epochs: 1000,
            zeta: 0.02,
            batch_size: 100,
            lr_actor: 4e-4,
            lr_critic: 1e-4,
            converge_window: 20,
            converge_tol: 0.01,
            arena_half: Some(6.0),
            seed: 0,
        }
    }
}

impl PpoConfig {
    /// Buffer length `T = horizon · phi`.
    pub fn buffer_len(&self) -> usize {
        self.horizon * self.phi
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: &str| Err(DatagenError::Config(m.into()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must be in (0, 1)");
        }
        if self.horizon == 0 || self.phi == 0 || self.batch_size == 0 {
            return bad("horizon, phi and batch size must be positive");
        }
        if !(self.zeta >= 0.0 && self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("zeta must be nonnegative and learning rates positive");
        }
        Ok(())
    }
}

/// How snapshot directions are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Rlgp,
    Rw,
    Wcc,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Rlgp => "rlgp",
            Strategy::Rw => "rw",
            Strategy::Wcc => "wcc",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [Strategy::Rlgp, Strategy::Rw, Strategy::Wcc]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}
