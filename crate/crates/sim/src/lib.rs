//! Deterministic scenario simulator and main-loop runtime for the sensor
//! fusion core: targets on a virtual clock, stand-in detectors, synthetic
//! fish-eye frames, ADS-B emissions, worker queues and run artifacts.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adsb_emit;
pub mod error;
pub mod queue;
pub mod render;
pub mod runtime;
pub mod scenario;
pub mod sensors;
pub mod workers;
pub mod world;

pub use error::{SimError, SimResult};
pub use runtime::{run, Event, RunConfig, RunOutput, Summary};
pub use scenario::Scenario;
