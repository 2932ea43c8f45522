//! Single-frame geometric localization: normalized pixel errors plus datalink
//! range to an inertial position.
//!
//! The chain is
//!
//! 1. `(u, v)` and the camera field of view give azimuth `alpha` and
//!    elevation `eps` in the camera frame;
//! 2. the two angles and the range `r` give the camera-frame point
//!    `p_c = [1, tan(alpha), tan(eps)] * r / sqrt(1 + tan^2(alpha) + tan^2(eps))`;
//! 3. `p = p_uav + R_IB * R_BP * p_c` takes it back to the inertial frame.
//!
//! Pixel error convention: `u > 0` means the target is right of the image
//! center and `v > 0` means it is below, so both map to negative angles in
//! the camera's Front-Left-Up axes.

use thiserror::Error;

use crate::frames::{EulerAngles, FrameTag, RotationMatrix3};
use crate::sensing::Detection;
use crate::{lit, Position3, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeolocError {
    #[error("field of view must lie in (0, 180) degrees, got {horizontal} x {vertical} rad")]
    InvalidFov { horizontal: f64, vertical: f64 },
    #[error("normalized pixel error ({u}, {v}) outside [-1, 1]")]
    PixelOutOfRange { u: f64, v: f64 },
    #[error("bearing ({azimuth}, {elevation}) rad is not in the camera's front hemisphere")]
    RearHemisphere { azimuth: f64, elevation: f64 },
    #[error("range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error("UAV position must be finite with z >= 0, got z = {0}")]
    InvalidUavPosition(f64),
}

fn f<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Horizontal and vertical camera field of view, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFov<T> {
    horizontal: T,
    vertical: T,
}

impl<T: Real> CameraFov<T> {
    pub fn new(horizontal: T, vertical: T) -> Result<Self, GeolocError> {
        let ok = |a: T| a.is_finite() && a > T::zero() && a < T::pi();
        if !ok(horizontal) || !ok(vertical) {
            return Err(GeolocError::InvalidFov {
                horizontal: f(horizontal),
                vertical: f(vertical),
            });
        }
        Ok(Self {
            horizontal,
            vertical,
        })
    }

    pub fn from_degrees(horizontal: T, vertical: T) -> Result<Self, GeolocError> {
        let k = T::pi() / lit(180.0);
        Self::new(horizontal * k, vertical * k)
    }

    pub fn horizontal(&self) -> T {
        self.horizontal
    }

    pub fn vertical(&self) -> T {
        self.vertical
    }

    /// `tan(horizontal / 2)`
    pub fn half_tan_horizontal(&self) -> T {
        (self.horizontal / lit(2.0)).tan()
    }

    /// `tan(vertical / 2)`
    pub fn half_tan_vertical(&self) -> T {
        (self.vertical / lit(2.0)).tan()
    }
}

/// Camera-frame azimuth and elevation of a target in front of the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingPair<T> {
    azimuth: T,
    elevation: T,
}

impl<T: Real> BearingPair<T> {
    pub fn new(azimuth: T, elevation: T) -> Result<Self, GeolocError> {
        let half_pi = T::frac_pi_2();
        let front = |a: T| a.is_finite() && a.abs() < half_pi;
        if !front(azimuth) || !front(elevation) {
            return Err(GeolocError::RearHemisphere {
                azimuth: f(azimuth),
                elevation: f(elevation),
            });
        }
        Ok(Self { azimuth, elevation })
    }

    pub fn azimuth(&self) -> T {
        self.azimuth
    }

    pub fn elevation(&self) -> T {
        self.elevation
    }
}

/// UAV position and orientation, plus the gimbal orientation relative to the
/// UAV body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavPose<T: Real> {
    position: Position3<T>,
    pub attitude: EulerAngles<T>,
    pub gimbal: EulerAngles<T>,
}

impl<T: Real> UavPose<T> {
    pub fn new(
        position: Position3<T>,
        attitude: EulerAngles<T>,
        gimbal: EulerAngles<T>,
    ) -> Result<Self, GeolocError> {
        if !position.iter().all(|c| c.is_finite()) || position.z < T::zero() {
            return Err(GeolocError::InvalidUavPosition(f(position.z)));
        }
        Ok(Self {
            position,
            attitude,
            gimbal,
        })
    }

    /// UAV at `[0, 0, altitude]` with level attitude.
    pub fn hovering(altitude: T, gimbal: EulerAngles<T>) -> Result<Self, GeolocError> {
        Self::new(
            Position3::new(T::zero(), T::zero(), altitude),
            EulerAngles::zero(),
            gimbal,
        )
    }

    pub fn position(&self) -> &Position3<T> {
        &self.position
    }

    pub fn altitude(&self) -> T {
        self.position.z
    }

    pub fn with_gimbal(self, gimbal: EulerAngles<T>) -> Self {
        Self { gimbal, ..self }
    }

    /// Inertial to body.
    pub fn body_from_inertial(&self) -> RotationMatrix3<T> {
        RotationMatrix3::from_euler(&self.attitude)
    }

    /// Body to camera.
    pub fn camera_from_body(&self) -> RotationMatrix3<T> {
        RotationMatrix3::from_euler(&self.gimbal)
    }

    pub fn camera_from_inertial(&self) -> RotationMatrix3<T> {
        self.camera_from_body() * self.body_from_inertial()
    }

    /// Rotation taking coordinates in `from` to coordinates in `to`.
    pub fn rotation(&self, from: FrameTag, to: FrameTag) -> RotationMatrix3<T> {
        use FrameTag::*;
        match (from, to) {
            (Inertial, Inertial) | (Body, Body) | (Camera, Camera) => RotationMatrix3::identity(),
            (Inertial, Body) => self.body_from_inertial(),
            (Body, Camera) => self.camera_from_body(),
            (Inertial, Camera) => self.camera_from_inertial(),
            (Body, Inertial) => self.body_from_inertial().inverse(),
            (Camera, Body) => self.camera_from_body().inverse(),
            (Camera, Inertial) => self.camera_from_inertial().inverse(),
        }
    }

    /// Moves a point between frames. Body and camera frames share their
    /// origin at the UAV position.
    pub fn transform_point(&self, p: &Position3<T>, from: FrameTag, to: FrameTag) -> Position3<T> {
        let centered = match from {
            FrameTag::Inertial => p - self.position,
            _ => *p,
        };
        let rotated = self.rotation(from, to).rotate(&centered);
        match to {
            FrameTag::Inertial => rotated + self.position,
            _ => rotated,
        }
    }

    /// `R_PB * R_BI * (p - p_uav)`
    pub fn inertial_to_camera(&self, p: &Position3<T>) -> Position3<T> {
        self.camera_from_inertial().rotate(&(p - self.position))
    }
}

/// Converts normalized pixel errors into camera-frame bearings.
pub fn pixel_to_bearings<T: Real>(
    u: T,
    v: T,
    fov: &CameraFov<T>,
) -> Result<BearingPair<T>, GeolocError> {
    let in_range = |x: T| x.is_finite() && x.abs() <= T::one();
    if !in_range(u) || !in_range(v) {
        return Err(GeolocError::PixelOutOfRange { u: f(u), v: f(v) });
    }
    let azimuth = -(u * fov.half_tan_horizontal()).atan();
    let elevation = -(v * fov.half_tan_vertical()).atan();
    BearingPair::new(azimuth, elevation)
}

/// Places a target at range `r` along the given bearings, camera frame.
pub fn bearings_range_to_camera_point<T: Real>(
    bearings: &BearingPair<T>,
    range: T,
) -> Result<Position3<T>, GeolocError> {
    check_range(range)?;
    let ta = bearings.azimuth.tan();
    let te = bearings.elevation.tan();
    let norm = (T::one() + ta * ta + te * te).sqrt();
    Ok(Position3::new(T::one(), ta, te) * (range / norm))
}

/// `p_uav + R_IB * R_BP * p_c`
pub fn camera_to_inertial<T: Real>(p_camera: &Position3<T>, pose: &UavPose<T>) -> Position3<T> {
    pose.transform_point(p_camera, FrameTag::Camera, FrameTag::Inertial)
}

/// Full single-frame solve from a detection and a datalink range.
pub fn geometric_solve<T: Real>(
    detection: &Detection<T>,
    range: T,
    fov: &CameraFov<T>,
    pose: &UavPose<T>,
) -> Result<Position3<T>, GeolocError> {
    let bearings = pixel_to_bearings(detection.u(), detection.v(), fov)?;
    solve_from_bearings(&bearings, range, pose)
}

/// The solve starting from already-converted bearings.
pub fn solve_from_bearings<T: Real>(
    bearings: &BearingPair<T>,
    range: T,
    pose: &UavPose<T>,
) -> Result<Position3<T>, GeolocError> {
    let p_camera = bearings_range_to_camera_point(bearings, range)?;
    Ok(camera_to_inertial(&p_camera, pose))
}

fn check_range<T: Real>(range: T) -> Result<(), GeolocError> {
    if range.is_finite() && range > T::zero() {
        Ok(())
    } else {
        Err(GeolocError::InvalidRange(f(range)))
    }
}
