//! Companion crate to `scr-core`: JSON files, CSV and SVG reports, the
//! experiment runner and the `scr` command line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

pub mod cli;
pub mod experiment;
pub mod files;
pub mod report;
pub mod svg;

pub use scr_core;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("{}schema error at `{path}`: {message}", file.as_ref().map(|f| format!("{}: ", f.display())).unwrap_or_default())]
    Schema { file: Option<PathBuf>, path: String, message: String },

    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Core(#[from] scr_core::Error),

    #[error("{algorithm} stopped without converging after {iterations} iterations{}", note.as_ref().map(|n| format!(": {n}")).unwrap_or_default())]
    NotConverged { algorithm: String, iterations: usize, note: Option<String> },
}

impl ToolError {
    pub fn schema(path: &str, message: String) -> Self {
        Self::Schema { file: None, path: if path.is_empty() { "<root>".into() } else { path.into() }, message }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn in_file(self, p: &Path) -> Self {
        match self {
            Self::Schema { path, message, .. } => Self::Schema { file: Some(p.to_path_buf()), path, message },
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use scr_core::Error as E;
        match self {
            Self::Schema { .. } | Self::Config(_) | Self::Io { .. } => EXIT_CONFIG,
            Self::NotConverged { .. } => EXIT_NONCONVERGENCE,
            Self::Core(e) => match e {
                E::InvalidInput(_) | E::TooLarge(_) => EXIT_CONFIG,
                E::InvalidScenario(_) | E::InfeasiblePair { .. } | E::UndefinedRatio { .. } | E::Infeasible(_) => EXIT_INFEASIBLE,
                E::NotConverged { .. } | E::RoundingFailed(_) => EXIT_NONCONVERGENCE,
            },
        }
    }
}

/// Wall-clock source for iteration timings.
pub struct WallClock(std::time::Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(std::time::Instant::now())
    }
}

impl scr_core::dashf::Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}
