// SPDX-License-Identifier: Apache-2.0

//! Driven-dissipative Dicke model toolkit.
//!
//! Mean-field steady states, linearized Langevin fluctuation spectra, photon
//! correlation functions, synthetic click streams and the analysis chain that
//! turns click streams back into fitted decay rates and critical exponents.

pub mod analysis;
pub mod closedsys;
pub mod error;
pub mod fitpipe;
pub mod meanfield;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod quad;
pub mod spectral;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use params::{CouplingConvention, PhysicalParams};
