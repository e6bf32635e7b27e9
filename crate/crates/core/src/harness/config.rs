//! Flat key/value experiment configuration.
//!
//! Every field can be set in a TOML file (`key = value`, no tables) and
//! overridden on the command line with `--set key=value`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelParams, Deployment, Point};
use crate::datagen::PpoConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("override {0:?} is not of the form key=value")]
    Override(String),
    #[error("invalid value for {key}: {detail}")]
    Invalid { key: &'static str, detail: String },
}

/// How MFL turns the input gradient into a relay move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MflUpdate {
    /// Normalize each relay's 2-vector gradient.
    Vector,
    /// Move each coordinate by `±ζ` according to its own sign.
    Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,

    pub alpha: f64,
    pub eta: f64,
    pub bandwidth: f64,
    pub r_int: f64,
    pub rho: f64,
    pub kappa: f64,
    pub z0: f64,

    /// Arena is `(−arena_half, arena_half)²` in coordinate units.
    pub arena_half: f64,
    /// Metres per coordinate unit; informational.
    pub unit_meters: f64,
    pub source: Point,
    pub destination: Point,
    pub relay_init: Vec<Point>,
    /// Jammer must stay farther than this from both endpoints.
    pub guard_radius: f64,
    pub zeta: f64,
    pub horizon: usize,
    pub snapshot_interval: usize,
    pub clamp_to_arena: bool,
    pub mfl_update: MflUpdate,

    pub train_deployments: usize,
    pub test_deployments: usize,

    pub gamma: f64,
    pub tau: f64,
    pub ppo_phi: usize,
    pub ppo_horizon: usize,
    pub ppo_inner_epochs: usize,
    pub ppo_max_epochs: usize,
    pub ppo_batch: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub ppo_converge_window: usize,
    pub ppo_converge_tol: f64,
    pub rl_max_epochs: usize,

    pub lr_mfl: f64,
    pub lr_gl: f64,
    pub epochs_mfl: usize,
    pub epochs_gl: usize,
    pub batch_size: usize,
    pub holdout_fraction: f64,

    pub synth_samples: usize,
    pub synth_test_samples: usize,
    pub synth_epochs: usize,
    pub lr_synth: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ch = ChannelParams::default();
        ExperimentConfig {
            seed: 0,
            alpha: ch.alpha,
            eta: ch.eta,
            bandwidth: ch.bandwidth,
            r_int: ch.r_int,
            rho: ch.rho,
            kappa: ch.kappa,
            z0: ch.z0,
            arena_half: 6.0,
            unit_meters: 50.0,
            source: [-4.5, 0.0],
            destination: [4.5, 0.0],
            relay_init: vec![[-2.7, 0.0], [-0.9, 0.0], [0.9, 0.0], [2.7, 0.0]],
            guard_radius: 3.0,
            zeta: 0.02,
            horizon: 400,
            snapshot_interval: 5,
            clamp_to_arena: true,
            mfl_update: MflUpdate::Vector,
            train_deployments: 100,
            test_deployments: 50,
            gamma: 0.9,
            tau: 0.2,
            ppo_phi: 5,
            ppo_horizon: 400,
            ppo_inner_epochs: 10,
            ppo_max_epochs: 1000,
            ppo_batch: 100,
            lr_actor: 4e-4,
            lr_critic: 1e-4,
            ppo_converge_window: 20,
            ppo_converge_tol: 0.01,
            rl_max_epochs: 200,
            lr_mfl: 2e-4,
            lr_gl: 2e-4,
            epochs_mfl: 300,
            epochs_gl: 300,
            batch_size: 100,
            holdout_fraction: 0.1,
            synth_samples: 5000,
            synth_test_samples: 500,
            synth_epochs: 200,
            lr_synth: 2e-3,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (if given) and applies `key=value` overrides on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                text.parse::<toml::Table>().map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            let (key, value) = ov.split_once('=').ok_or_else(|| ConfigError::Override(ov.clone()))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Override(ov.clone()));
            }
            let value = value.trim();
            let parsed = format!("v = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()));
            table.insert(key.to_string(), parsed);
        }
        let cfg: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key, detail: &str| Err(ConfigError::Invalid { key, detail: detail.into() });
        self.channel()
            .validate()
            .map_err(|e| ConfigError::Invalid { key: "channel", detail: e.to_string() })?;
        if !(self.arena_half > 0.0) {
            return invalid("arena_half", "must be positive");
        }
        if !(self.guard_radius > 0.0) {
            return invalid("guard_radius", "must be positive");
        }
        for p in [self.source, self.destination] {
            if p[0].abs() >= self.arena_half || p[1].abs() >= self.arena_half {
                return invalid("source/destination", "endpoints must lie inside the arena");
            }
        }
        if self.relay_init.is_empty() {
            return invalid("relay_init", "need at least one relay");
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return invalid("zeta", "must be nonnegative");
        }
        if self.snapshot_interval == 0 {
            return invalid("snapshot_interval", "must be positive");
        }
        if self.batch_size == 0 || self.ppo_batch == 0 {
            return invalid("batch_size", "must be positive");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return invalid("holdout_fraction", "must be in [0, 1)");
        }
        self.ppo().validate().map_err(|e| ConfigError::Invalid { key: "ppo", detail: e.to_string() })?;
        Ok(())
    }

    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            alpha: self.alpha,
            eta: self.eta,
            bandwidth: self.bandwidth,
            r_int: self.r_int,
            rho: self.rho,
            kappa: self.kappa,
            z0: self.z0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.relay_init.len() + 2
    }

    /// Initial relay layout with the given jammer.
    pub fn initial_deployment(&self, jammer: Point) -> Result<Deployment, ChannelError> {
        let mut positions = vec![self.source];
        positions.extend_from_slice(&self.relay_init);
        positions.push(self.destination);
        Deployment::new(positions, jammer)
    }

    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            gamma: self.gamma,
            tau: self.tau,
            horizon: self.ppo_horizon,
            phi: self.ppo_phi,
            inner_epochs: self.ppo_inner_epochs,
            max_epochs: self.ppo_max_epochs,
            zeta: self.zeta,
            batch_size: self.ppo_batch,
            lr_actor: self.lr_actor,
            lr_critic: self.lr_critic,
            converge_window: self.ppo_converge_window,
            converge_tol: self.ppo_converge_tol,
            arena_half: self.clamp_to_arena.then_some(self.arena_half),
            seed: self.seed,
        }
    }
}
