//! Experiment orchestration: scenarios, training loops, the synthetic
//! check, evaluation reports and the command-line interface.

pub mod ablation;
pub mod cli;
mod config;
pub mod eval;
pub mod pipeline;
pub mod synth;
mod testset;
pub mod train;

use std::path::Path;

use thiserror::Error;

use crate::channel::ChannelError;
use crate::datagen::DatagenError;
use crate::flow::FlowError;
use crate::nn::NnError;
use crate::optimize::OptimizeError;
use crate::records::RecordError;
use crate::spectral::SpectralError;

pub use config::{ConfigError, ExperimentConfig, MflUpdate};
pub use testset::{
    gen_testset, jammer_admissible, read_scenarios, sample_jammer, sample_scenarios, scenario_line, write_scenarios,
    Scenario,
};

/// Error classes, each mapped to its own process exit code by the CLI.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            return HarnessError::Usage(format!("{}: file not found", path.display()));
        }
        HarnessError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 2,
            HarnessError::Io { .. } => 3,
            HarnessError::Data(_) => 4,
            HarnessError::Numerical(_) => 5,
        }
    }
}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { path, source } => HarnessError::io(Path::new(&path), source),
            other => HarnessError::Usage(other.to_string()),
        }
    }
}

impl From<RecordError> for HarnessError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Io { path, source } => HarnessError::io(&path, source),
            other => HarnessError::Data(other.to_string()),
        }
    }
}

impl From<ChannelError> for HarnessError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::DegenerateGeometry { .. } => HarnessError::Numerical(e.to_string()),
            other => HarnessError::Data(other.to_string()),
        }
    }
}

impl From<FlowError> for HarnessError {
    fn from(e: FlowError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

impl From<SpectralError> for HarnessError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Channel(c) => c.into(),
            SpectralError::Shape { .. } | SpectralError::NonPositiveWeight { .. } => HarnessError::Data(e.to_string()),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<NnError> for HarnessError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Io(source) => HarnessError::Io { path: "checkpoint".into(), source },
            NnError::NonFinite(_) => HarnessError::Numerical(e.to_string()),
            other => HarnessError::Data(other.to_string()),
        }
    }
}

impl From<OptimizeError> for HarnessError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Channel(c) => c.into(),
            OptimizeError::Flow(f) => f.into(),
            OptimizeError::Spectral(s) => s.into(),
            OptimizeError::Nn(n) => n.into(),
            OptimizeError::MissingModel(..) => HarnessError::Usage(e.to_string()),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<DatagenError> for HarnessError {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::Channel(c) => c.into(),
            DatagenError::Nn(n) => n.into(),
            DatagenError::Spectral(s) => s.into(),
            DatagenError::Optimize(o) => o.into(),
            DatagenError::Record(r) => r.into(),
            DatagenError::NonFinite { .. } => HarnessError::Numerical(e.to_string()),
            DatagenError::Config(_) | DatagenError::EmptyPool => HarnessError::Usage(e.to_string()),
        }
    }
}
