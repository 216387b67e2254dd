//! Simulator and analysis toolkit for path entanglement generated by two
//! coherently pumped microring photon-pair sources.
//!
//! The crate is organised along the measurement chain:
//!
//! - [`source`]: ring resonator spectral model, joint spectral amplitudes,
//!   Schmidt analysis and source-to-source overlap.
//! - [`device`]: the two-qubit state produced by the chip, the analysis
//!   interferometers and photon counting.
//! - [`bell`]: CHSH evaluation.
//! - [`tomo`]: over-complete state tomography with a constrained least squares
//!   estimator and Monte-Carlo error bars.
//! - [`fit`]: fringe fitting and phase-voltage calibration.
//! - [`cli`]: named experiments driven from a config file.

pub mod bell;
pub mod cli;
pub mod config;
pub mod device;
pub mod error;
pub mod fit;
pub mod lsq;
pub mod qstate;
pub mod source;
pub mod tomo;

pub use error::{Error, Result};
pub use qstate::{DensityMatrix, Ket, C64};
