//! Desk-scale simulation and analysis of pulsed squeezed light.
//!
//! The pipeline runs: parametric amplifier model ([`dopa`]) → single-mode
//! Gaussian state ([`gaussian`]) → pulse-by-pulse homodyne sampling
//! ([`homodyne`]) → block variances, fits and dB figures ([`estimators`]).
//! [`io`] holds the configuration, file formats and the command layer used by
//! the `squeezelab` binary.

pub mod dopa;
pub mod error;
pub mod estimators;
pub mod gaussian;
pub mod homodyne;
pub mod io;

pub use error::{Error, Result};
