//! UAV-assisted localization of an unmanned surface vehicle (USV).
//!
//! A hovering UAV observes the USV through a gimballed camera (normalized
//! pixel errors) and a datalink (range). This crate turns those observations
//! into an inertial position estimate, either frame by frame through a
//! closed-form geometric solve or recursively through an extended Kalman
//! filter, and ships a deterministic scenario simulator plus a CLI harness
//! that benchmarks the filter against mean-filter and no-filter baselines.
//!
//! Frames (all right-handed):
//!
//! | frame    | axes | origin                   |
//! |----------|------|--------------------------|
//! | Inertial | ENU  | UAV takeoff point        |
//! | Body     | FLU  | UAV camera mount         |
//! | Camera   | FLU  | camera optical center    |
//!
//! The geometric and filtering code is generic over the scalar type through
//! [`Real`]; the simulator and CLI run in `f64`.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod filters;
pub mod frames;
pub mod geoloc;
pub mod sensing;
pub mod simworld;

use nalgebra::RealField;

/// Scalar types the estimation core runs on (`f32`, `f64`).
pub trait Real: RealField + Copy + num_traits::ToPrimitive {}

impl<T> Real for T where T: RealField + Copy + num_traits::ToPrimitive {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub(crate) fn lit<T: Real>(value: f64) -> T {
    nalgebra::convert(value)
}

/// A point or displacement in meters.
pub type Position3<T> = nalgebra::Vector3<T>;

pub use filters::{EkfState, FilterContext, Measurement, NoiseConfig};
pub use frames::{EulerAngles, FrameTag, RotationMatrix3};
pub use geoloc::{BearingPair, CameraFov, UavPose};
pub use sensing::{Detection, GimbalController, SensorNoise};

/// Double-precision aliases.
pub mod f64 {
    pub type Position3 = super::Position3<f64>;
    pub type EulerAngles = super::EulerAngles<f64>;
    pub type RotationMatrix3 = super::RotationMatrix3<f64>;
    pub type CameraFov = super::CameraFov<f64>;
    pub type BearingPair = super::BearingPair<f64>;
    pub type UavPose = super::UavPose<f64>;
    pub type Detection = super::Detection<f64>;
    pub type EkfState = super::EkfState<f64>;
    pub type Measurement = super::Measurement<f64>;
    pub type NoiseConfig = super::NoiseConfig<f64>;
    pub type FilterContext = super::FilterContext<f64>;
    pub type GimbalController = super::GimbalController<f64>;
}

/// Single-precision aliases.
pub mod f32 {
    pub type Position3 = super::Position3<f32>;
    pub type EulerAngles = super::EulerAngles<f32>;
    pub type RotationMatrix3 = super::RotationMatrix3<f32>;
    pub type CameraFov = super::CameraFov<f32>;
    pub type BearingPair = super::BearingPair<f32>;
    pub type UavPose = super::UavPose<f32>;
    pub type Detection = super::Detection<f32>;
    pub type EkfState = super::EkfState<f32>;
    pub type Measurement = super::Measurement<f32>;
    pub type NoiseConfig = super::NoiseConfig<f32>;
    pub type FilterContext = super::FilterContext<f32>;
    pub type GimbalController = super::GimbalController<f32>;
}
