//! Pulse-level simulation of Rabi-driven sideband coupling between a transmon
//! qubit and long-lived bosonic memory modes.
//!
//! Public inputs use MHz for frequencies quoted as `f = omega / 2pi` and
//! microseconds for times. Everything internal is angular (rad/us).

pub mod calibration;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod model;
pub mod oracle;
pub mod protocols;
pub mod report;
pub mod tomography;
pub mod validate;

pub use error::{Error, Result};
