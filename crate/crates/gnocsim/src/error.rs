//! Shared error type and exit-code mapping.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    /// Bad experiment configuration (schema, unknown key, invalid field).
    #[error("config error: {0}")]
    Config(String),

    /// A precondition of an operation was violated.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Text-input parse failure, with the offending line.
    #[error("parse error in {path} (line {line}): {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Requested stage demand does not fit on the available tiles.
    #[error("infeasible capacity on {kind} tier: need {needed_tiles} tiles, have {available_tiles}")]
    Infeasible {
        kind: &'static str,
        needed_tiles: usize,
        available_tiles: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// An error tagged with the simulation phase it occurred in.
    #[error("[{phase}] {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<SimError>,
    },
}

impl SimError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SimError::Invalid(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    /// Wrap this error with the name of the pipeline phase that raised it.
    pub fn in_phase(self, phase: &'static str) -> Self {
        SimError::Phase {
            phase,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 config error, 3 infeasible capacity, 4 runtime error.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            SimError::Infeasible { .. } => 3,
            SimError::Phase { source, .. } => source.exit_code(),
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
