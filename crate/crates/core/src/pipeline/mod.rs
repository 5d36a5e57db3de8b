//! Orchestration: configuration, simulate/run/evaluate/compare commands and
//! run-record files.

mod commands;
mod config;
mod record;
mod run;

pub use commands::*;
pub use config::*;
pub use record::*;
pub use run::*;

use thiserror::Error;

use crate::eval::EvalError;
use crate::kio::{FilterVariant, KioError};
use crate::lie::LieError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("dataset has no ticks")]
    EmptyDataset,
    #[error("timestamps do not match at tick {tick}: {detail}")]
    TimestampMismatch { tick: usize, detail: String },
    #[error("run records come from different datasets ({0})")]
    DatasetMismatch(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("numerical failure at tick {tick}: {source}")]
    Numerical { tick: usize, source: KioError },
    #[error("{variant} diverged (non-finite state) at tick {tick}")]
    Divergence { tick: usize, variant: FilterVariant },
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Kio(#[from] KioError),
}

impl PipelineError {
    pub fn config(field: &str, reason: String) -> Self {
        PipelineError::Config { field: field.to_string(), reason }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.display().to_string(), source }
    }

    /// Process exit code: 1 for validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Numerical { .. }
            | PipelineError::Divergence { .. }
            | PipelineError::Lie(_)
            | PipelineError::Kio(KioError::Filter(_) | KioError::Lie(_)) => 2,
            _ => 1,
        }
    }
}
