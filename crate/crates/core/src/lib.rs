//! Simulation workbench for measuring how loudspeaker-based spatial audio
//! reproduction (nearest speaker, VBAP, basic higher-order ambisonics) changes
//! the behaviour of multi-microphone hearing-aid algorithms.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: coordinates and regular circular arrays
//! - [`panner`]: driving weights and the aliasing predictor
//! - [`hrir`]: HRIR sets, interpolation, listener translation, sphere model
//! - [`binsim`]: scene rendering through reproduction methods or free field
//! - [`haalgo`]: the four hearing-aid algorithms with shadow filtering
//! - [`metrics`]: beam, SNR, localization and spectral-distance measures
//! - [`harness`]: the batch sweep, contours and reports

pub mod audio;
pub mod binsim;
pub mod dsp;
pub mod error;
pub mod geometry;
pub mod haalgo;
pub mod harness;
pub mod hrir;
pub mod metrics;
pub mod panner;
pub mod stimulus;

pub use error::{Error, Result};
