// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the simulation and training stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("unsupported target for this system: {0}")]
    UnsupportedTarget(String),

    #[error("time {t} outside episode [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },

    #[error("integrator step size underflow (dt = {dt}, substeps = {substeps})")]
    StepUnderflow { dt: f64, substeps: usize },

    #[error("state invariant violated at t = {t}: {what}")]
    InvariantViolation { t: f64, what: String },

    #[error("episode already finished after {steps} steps")]
    EpisodeFinished { steps: usize },

    #[error("replay buffer holds {have} transitions, batch needs {need}")]
    InsufficientBuffer { have: usize, need: usize },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from a physical-state invariant rather than
    /// bad input or I/O.
    pub fn is_physics_violation(&self) -> bool {
        matches!(
            self,
            Error::InvariantViolation { .. } | Error::StepUnderflow { .. }
        )
    }

    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidParameter { .. }
                | Error::UnsupportedTarget(_)
                | Error::ShapeMismatch { .. }
        )
    }
}
