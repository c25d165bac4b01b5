//! Trident-quaternion error-state Kalman filtering for strapdown inertial
//! navigation in the earth frame, with zero-velocity and odometer-aided
//! initial alignment and a Monte-Carlo harness.
//!
//! Modules, bottom up:
//!
//! - [`triquat`]: quaternion and trident-quaternion algebra
//! - [`earth`]: constants, J2 gravitation, frames
//! - [`mech`]: strapdown mechanization
//! - [`errmodel`]: linearized error models and covariance transforms
//! - [`meas`]: zero-velocity and odometer measurement models
//! - [`ekf`]: the error-state filter
//! - [`sim`]: truth trajectories and sensor synthesis
//! - [`harness`]: Monte-Carlo sweeps, reports, replay, configuration

pub mod earth;
pub mod ekf;
pub mod errmodel;
pub mod harness;
pub mod meas;
pub mod mech;
pub mod sim;
pub mod so3;
pub mod triquat;

pub use earth::{EarthParams, GeoPosition};
pub use ekf::{FilterConfig, FilterState, RightRetraction};
pub use errmodel::{ErrorModelKind, ErrorState21, SystemMatrices};
pub use meas::{Measurement, MeasurementKind, OdoParams};
pub use mech::{ImuSample, Integrator, MechConfig};
pub use triquat::{ErrorTriple, NavState, Quaternion, Side, TridentQuaternion, TridentTwist};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("filter fault: {0}")]
    Fault(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
