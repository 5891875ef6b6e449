//! Batch driver for the `tcl-chaos` pipelines.
//!
//! Every command reads a [`config::RunConfig`], writes its artifacts into the
//! output directory and finishes with `manifest-<command>.json`, which lists
//! each input and output with its SHA-256.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod plot;

use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Core(#[from] tcl_chaos::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short stable tag for the error record.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::MissingInput(_) => "missing_input",
            CliError::Plot(_) => "plot",
            CliError::Core(_) => "computation",
        }
    }

    /// Machine-readable record printed on stderr when a run fails.
    pub fn record(&self, command: Option<&str>) -> ErrorRecord {
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
            command: command.map(str::to_string),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    pub command: Option<String>,
}
