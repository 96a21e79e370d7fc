//! Closed-loop benchmark for motion planners merging into dense highway traffic.
//!
//! The crate is organised along the benchmark pipeline:
//!
//! - [`types`], [`road`], [`frame`], [`dynamics`], [`collision`] and [`sample`]
//!   hold the shared world model (vehicle states, road geometry, kinematics,
//!   oriented-box collision and the per-vehicle training/inference record).
//! - [`scenario`] samples initial scenes and classifies them by density with a
//!   Gaussian mixture.
//! - [`policy`] drives the main-lane vehicles, either with the style-aware rule
//!   policy or with the attention model trained by imitation.
//! - [`sim`] runs the 10 Hz closed loop against a planner under test.
//! - [`metrics`] and [`eval`] reduce episodes to scores and suggestions.

pub mod collision;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod frame;
pub mod io;
pub mod metrics;
pub mod policy;
pub mod road;
pub mod sample;
pub mod scenario;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
pub use frame::Frame;
pub use road::RoadGeometry;
pub use sample::{Sample, Snapshot};
pub use types::{Control, Lane, StyleLabel, VehicleId, VehicleState, DT};
