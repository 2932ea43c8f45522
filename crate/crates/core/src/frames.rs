//! Rotation algebra for the Inertial (ENU), Body (FLU) and Camera (FLU) frames.
//!
//! # Euler convention
//!
//! Angles are applied intrinsically in Z-Y-X order (yaw, then pitch, then
//! roll) and the same convention is used for the UAV attitude and for the
//! gimbal angles:
//!
//! * yaw is a right-handed rotation about the parent `+z` (up) axis, so a
//!   positive yaw turns the front axis from east towards north;
//! * pitch is positive nose-up: a negative pitch tilts the front axis
//!   towards the ground (a gimbal at pitch `-pi/2` looks straight down);
//! * roll is a right-handed rotation about the front axis.
//!
//! A [`RotationMatrix3`] built from Euler angles maps parent-frame
//! coordinates into child-frame coordinates, i.e. `v_child = R * v_parent`.
//! Going the other way is [`RotationMatrix3::inverse`] (the transpose).

use std::fmt;
use std::ops::Mul;

use nalgebra::Matrix3;
use thiserror::Error;

use crate::{lit, Position3, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("non-finite {0} angle")]
    NonFinite(&'static str),
    #[error(
        "matrix is not a proper rotation (orthonormality error {orthonormality:e}, det {det})"
    )]
    NotARotation { orthonormality: f64, det: f64 },
}

/// The coordinate frames the localization chain moves between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameTag {
    /// East-North-Up, origin at the UAV takeoff point.
    Inertial,
    /// Front-Left-Up, attached to the UAV, origin at the camera mount.
    Body,
    /// Front-Left-Up, attached to the gimballed camera.
    Camera,
}

impl fmt::Display for FrameTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FrameTag::Inertial => "inertial",
            FrameTag::Body => "body",
            FrameTag::Camera => "camera",
        };
        f.write_str(name)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(angle: T) -> T {
    let pi = T::pi();
    let two_pi = T::two_pi();
    let wrapped = angle - two_pi * ((angle + pi) / two_pi).floor();
    if wrapped <= -pi {
        wrapped + two_pi
    } else if wrapped > pi {
        wrapped - two_pi
    } else {
        wrapped
    }
}

/// Roll, pitch and yaw in radians, each normalized to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles<T> {
    roll: T,
    pitch: T,
    yaw: T,
}

impl<T: Real> EulerAngles<T> {
    pub fn new(roll: T, pitch: T, yaw: T) -> Result<Self, FrameError> {
        for (name, value) in [("roll", roll), ("pitch", pitch), ("yaw", yaw)] {
            if !value.is_finite() {
                return Err(FrameError::NonFinite(name));
            }
        }
        Ok(Self {
            roll: wrap_angle(roll),
            pitch: wrap_angle(pitch),
            yaw: wrap_angle(yaw),
        })
    }

    pub fn zero() -> Self {
        Self {
            roll: T::zero(),
            pitch: T::zero(),
            yaw: T::zero(),
        }
    }

    /// Builds angles from degrees.
    pub fn from_degrees(roll: T, pitch: T, yaw: T) -> Result<Self, FrameError> {
        let k = T::pi() / lit(180.0);
        Self::new(roll * k, pitch * k, yaw * k)
    }

    pub fn roll(&self) -> T {
        self.roll
    }

    pub fn pitch(&self) -> T {
        self.pitch
    }

    pub fn yaw(&self) -> T {
        self.yaw
    }

    /// `[roll, pitch, yaw]` in degrees.
    pub fn to_degrees(&self) -> [T; 3] {
        let k = lit::<T>(180.0) / T::pi();
        [self.roll * k, self.pitch * k, self.yaw * k]
    }

    pub fn with_pitch(self, pitch: T) -> Self {
        Self {
            pitch: wrap_angle(pitch),
            ..self
        }
    }

    pub fn with_yaw(self, yaw: T) -> Self {
        Self {
            yaw: wrap_angle(yaw),
            ..self
        }
    }
}

/// Returned by [`RotationMatrix3::to_euler`] when pitch sits at +-pi/2 and
/// roll and yaw cannot be separated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GimbalLock<T> {
    /// Either `pi/2` or `-pi/2`.
    pub pitch: T,
    /// The yaw that reproduces the rotation if roll is taken as zero.
    pub yaw_at_zero_roll: T,
}

/// A proper 3x3 rotation (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix3<T: Real>(Matrix3<T>);

impl<T: Real> RotationMatrix3<T> {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Parent-to-child rotation for the given Euler angles.
    pub fn from_euler(angles: &EulerAngles<T>) -> Self {
        let (sr, cr) = angles.roll.sin_cos();
        let (sp, cp) = angles.pitch.sin_cos();
        let (sy, cy) = angles.yaw.sin_cos();
        let (zero, one) = (T::zero(), T::one());

        // Child axes expressed in the parent frame: Rz(yaw) * Ry(-pitch) * Rx(roll).
        let rz = Matrix3::new(cy, -sy, zero, sy, cy, zero, zero, zero, one);
        let ry = Matrix3::new(cp, zero, -sp, zero, one, zero, sp, zero, cp);
        let rx = Matrix3::new(one, zero, zero, zero, cr, -sr, zero, sr, cr);
        let child_axes = rz * ry * rx;
        Self(child_axes.transpose())
    }

    /// Accepts `m` only if it satisfies the rotation invariants to `1e-12`
    /// (scaled by the scalar precision for types coarser than `f64`).
    pub fn try_from_matrix(m: Matrix3<T>) -> Result<Self, FrameError> {
        let tol = tolerance::<T>();
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if err > tol || (det - T::one()).abs() > tol {
            return Err(FrameError::NotARotation {
                orthonormality: err.to_f64().unwrap_or(f64::NAN),
                det: det.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Position3<T>) -> Position3<T> {
        self.0 * v
    }

    /// Recovers the Euler angles this rotation was built from.
    pub fn to_euler(&self) -> Result<EulerAngles<T>, GimbalLock<T>> {
        // Child axes in parent coordinates.
        let a = self.0.transpose();
        let cos_pitch = (a[(0, 0)] * a[(0, 0)] + a[(1, 0)] * a[(1, 0)]).sqrt();
        let sin_pitch = a[(2, 0)];
        let lock_tol = T::default_epsilon().sqrt();
        if cos_pitch < lock_tol {
            let half_pi = T::frac_pi_2();
            return Err(if sin_pitch > T::zero() {
                GimbalLock {
                    pitch: half_pi,
                    yaw_at_zero_roll: (-a[(0, 1)]).atan2(a[(1, 1)]),
                }
            } else {
                GimbalLock {
                    pitch: -half_pi,
                    yaw_at_zero_roll: -(a[(0, 1)].atan2(a[(1, 1)])),
                }
            });
        }
        let pitch = sin_pitch.atan2(cos_pitch);
        let roll = a[(2, 1)].atan2(a[(2, 2)]);
        let yaw = a[(1, 0)].atan2(a[(0, 0)]);
        Ok(EulerAngles {
            roll: wrap_angle(roll),
            pitch: wrap_angle(pitch),
            yaw: wrap_angle(yaw),
        })
    }
}

impl<T: Real> Mul for RotationMatrix3<T> {
    type Output = RotationMatrix3<T>;

    fn mul(self, rhs: Self) -> Self::Output {
        RotationMatrix3(self.0 * rhs.0)
    }
}

impl<T: Real> Mul<Position3<T>> for RotationMatrix3<T> {
    type Output = Position3<T>;

    fn mul(self, rhs: Position3<T>) -> Self::Output {
        self.0 * rhs
    }
}

/// `1e-12` for `f64`; a few ulps-worth for coarser scalars.
fn tolerance<T: Real>() -> T {
    let floor = lit::<T>(1e-12);
    let eps = T::default_epsilon() * lit(64.0);
    if eps > floor {
        eps
    } else {
        floor
    }
}
