//! Experiment runner for `lagflow-core`: configuration files, output
//! formats and the `lagflow` command line.
//!
//! An experiment is one TOML file. [`config::parse`] validates it,
//! [`experiment::execute`] runs it in memory and [`experiment::write_outputs`]
//! puts the results on disk.

// `!(a < b)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod expr;
pub mod format;

use std::path::PathBuf;

pub use config::{Config, ConfigError, Kind};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] lagflow_core::Error),
    #[error("{0}")]
    Format(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Process exit status of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    AssertionFailed = 1,
    ConfigError = 2,
    RuntimeError = 3,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }
}

impl Error {
    pub fn status(&self) -> Status {
        match self {
            Error::Config(_) => Status::ConfigError,
            _ => Status::RuntimeError,
        }
    }
}
