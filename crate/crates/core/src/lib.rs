//! Algorithmic core of a multi-sensor drone detection system.
//!
//! Per-sensor pipelines (fish-eye foreground extraction and tracking, audio
//! MFCC features, ADS-B decoding), pan/tilt pointing control, decision-level
//! fusion with time smoothing, and a detection-evaluation harness.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix them to `f64`, which is what the rest of the system uses.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod adsb;
pub mod assignment;
pub mod audio;
pub mod control;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod scalar;
pub mod tracking;
pub mod types;
pub mod vision;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use types::{iou, AngleOffset, Detection, Millis, Rect, SensorId, TargetClass};

pub type BBox = types::Rect<f64>;
pub type GrayImage = vision::GrayImage<f64>;
pub type GmmModel = vision::GmmModel<f64>;
pub type KalmanState = tracking::KalmanState<f64>;
pub type Track = tracking::Track<f64>;
pub type Tracker = tracking::Tracker<f64>;
pub type GeoPosition = geometry::GeoPosition<f64>;
pub type SystemPose = geometry::SystemPose<f64>;
pub type CameraModel = geometry::CameraModel<f64>;

pub type BBoxF32 = types::Rect<f32>;
pub type GrayImageF32 = vision::GrayImage<f32>;
pub type TrackerF32 = tracking::Tracker<f32>;
