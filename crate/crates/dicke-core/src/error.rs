// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors produced by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("no convergence in {what}: last residual {residual:e}")]
    NonConvergence { what: &'static str, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unrealizable covariance: relative violation {violation:e} exceeds tolerance")]
    Unrealizable { violation: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
