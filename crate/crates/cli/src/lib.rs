//! Batch driver: problem files in, certificates and refinement traces out.

pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use ocm_core::approx::ApproxError;
use ocm_core::baire::GridError;
use ocm_core::order::OrderError;
use thiserror::Error;

pub use config::{Problem, ProblemConfig};
pub use pipeline::{run_refine, run_selfcheck, run_solve, RunReport, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RANGE: i32 = 3;
pub const EXIT_COLLAPSE: i32 = 4;
pub const EXIT_FAIL: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl From<OrderError> for CliError {
    fn from(e: OrderError) -> Self {
        match e {
            OrderError::Approx(a) => CliError::Approx(a),
            OrderError::Grid(g) => CliError::Grid(g),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Approx(a) => match a {
                ApproxError::RangeViolation { .. }
                | ApproxError::NoPivot { .. }
                | ApproxError::Operator { .. } => EXIT_RANGE,
                ApproxError::DeltaCollapse { .. } => EXIT_COLLAPSE,
                _ => EXIT_CONFIG,
            },
            CliError::Grid(GridError::Sample { .. }) => EXIT_RANGE,
            CliError::Grid(_) => EXIT_CONFIG,
        }
    }
}
