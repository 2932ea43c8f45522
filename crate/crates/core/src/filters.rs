//! Position estimators: the extended Kalman filter and the two baselines it
//! is compared against.
//!
//! The EKF state is the USV position in the inertial frame. The target is
//! modeled as stationary (`F = I`) and the process noise grows with the gap
//! `T` between valid measurements as `Q = I * sigma_a * T^4 / 3`. Each
//! measurement is `z = [r, alpha, eps, h]`: datalink range, camera azimuth,
//! camera elevation and UAV altitude, predicted from a position `x` by
//!
//! ```text
//! p_c   = R_PB * R_BI * (x - p_uav)
//! r     = |p_c|
//! alpha = atan(y_c / x_c)
//! eps   = atan(z_c / x_c)
//! h     = x.z + p_uav.z
//! ```
//!
//! The elevation row of the Jacobian uses `x_c^2 + z_c^2` in its
//! denominators, which is the derivative of `atan(z_c / x_c)`. A form with
//! `x_c^2 + y_c^2` in that row circulates in the literature and does not
//! match finite differences.

use nalgebra::{Matrix3, Matrix4, Matrix4x3, SymmetricEigen, Vector4};
use thiserror::Error;

use crate::frames::wrap_angle;
use crate::geoloc::{solve_from_bearings, BearingPair, CameraFov, GeolocError, UavPose};
use crate::sensing::Detection;
use crate::{lit, Position3, Real};

/// Symmetry tolerance of a healthy covariance, per entry.
pub const COVARIANCE_SYMMETRY_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated in a healthy covariance.
pub const COVARIANCE_EIGEN_FLOOR: f64 = -1e-9;

/// Squared-distance floor below which the angle rows of the Jacobian blow up.
const JACOBIAN_SINGULARITY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("gap time must be positive and finite, got {0} s")]
    InvalidGap(f64),
    #[error("target is behind the camera (x_c = {0})")]
    BehindCamera(f64),
    #[error("measurement Jacobian is singular at this state")]
    SingularJacobian,
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("measurement time {time} s does not follow last update at {last} s")]
    NonMonotonicTime { time: f64, last: f64 },
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(&'static str),
    #[error("measured bearing ({azimuth}, {elevation}) rad lies outside the camera field of view")]
    OutsideFov { azimuth: f64, elevation: f64 },
    #[error("covariance is not symmetric positive semidefinite")]
    InvalidCovariance,
    #[error("mean filter needs at least one sample")]
    EmptyHistory,
    #[error(transparent)]
    Geoloc(#[from] GeolocError),
}

fn f<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Estimate, covariance and time of the last accepted measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState<T: Real> {
    x: Position3<T>,
    p: Matrix3<T>,
    last_update_time: T,
}

impl<T: Real> EkfState<T> {
    pub fn new(x: Position3<T>, p: Matrix3<T>, last_update_time: T) -> Result<Self, FilterError> {
        if !covariance_is_healthy(&p) {
            return Err(FilterError::InvalidCovariance);
        }
        Ok(Self {
            x,
            p,
            last_update_time,
        })
    }

    pub fn x(&self) -> &Position3<T> {
        &self.x
    }

    pub fn covariance(&self) -> &Matrix3<T> {
        &self.p
    }

    pub fn last_update_time(&self) -> T {
        self.last_update_time
    }
}

/// Checks symmetry to [`COVARIANCE_SYMMETRY_TOL`] and eigenvalues against
/// [`COVARIANCE_EIGEN_FLOOR`].
pub fn covariance_is_healthy<T: Real>(p: &Matrix3<T>) -> bool {
    if !p.iter().all(|v| v.is_finite()) {
        return false;
    }
    if (p - p.transpose()).abs().max() > lit(COVARIANCE_SYMMETRY_TOL) {
        return false;
    }
    let sym = (p + p.transpose()) * lit::<T>(0.5);
    SymmetricEigen::new(sym).eigenvalues.min() >= lit(COVARIANCE_EIGEN_FLOOR)
}

/// `z = [r, alpha, eps, h]` stamped with its acquisition time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement<T> {
    range: T,
    azimuth: T,
    elevation: T,
    height: T,
    time: T,
}

impl<T: Real> Measurement<T> {
    pub fn new(
        range: T,
        azimuth: T,
        elevation: T,
        height: T,
        time: T,
    ) -> Result<Self, FilterError> {
        if !(range.is_finite() && range > T::zero()) {
            return Err(FilterError::InvalidMeasurement("range must be positive"));
        }
        let pi = T::pi();
        let angle_ok = |a: T| a.is_finite() && a > -pi && a <= pi;
        if !angle_ok(azimuth) || !angle_ok(elevation) {
            return Err(FilterError::InvalidMeasurement(
                "angles must lie in (-pi, pi]",
            ));
        }
        if !height.is_finite() || !time.is_finite() {
            return Err(FilterError::InvalidMeasurement(
                "height and time must be finite",
            ));
        }
        Ok(Self {
            range,
            azimuth,
            elevation,
            height,
            time,
        })
    }

    pub fn range(&self) -> T {
        self.range
    }

    pub fn azimuth(&self) -> T {
        self.azimuth
    }

    pub fn elevation(&self) -> T {
        self.elevation
    }

    pub fn height(&self) -> T {
        self.height
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn as_vector(&self) -> Vector4<T> {
        Vector4::new(self.range, self.azimuth, self.elevation, self.height)
    }
}

/// Measurement variances and process-noise scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig<T: Real> {
    r_diag: Vector4<T>,
    sigma_a: T,
}

impl<T: Real> NoiseConfig<T> {
    /// `r_diag` holds the variances of `[r, alpha, eps, h]` in
    /// m^2, rad^2, rad^2, m^2.
    pub fn new(r_diag: Vector4<T>, sigma_a: T) -> Result<Self, FilterError> {
        if !r_diag.iter().all(|v| v.is_finite() && *v > T::zero()) {
            return Err(FilterError::InvalidMeasurement(
                "measurement variances must be > 0",
            ));
        }
        if !(sigma_a.is_finite() && sigma_a > T::zero()) {
            return Err(FilterError::InvalidMeasurement("sigma_a must be > 0"));
        }
        Ok(Self { r_diag, sigma_a })
    }

    pub fn r_diag(&self) -> &Vector4<T> {
        &self.r_diag
    }

    pub fn sigma_a(&self) -> T {
        self.sigma_a
    }

    pub fn measurement_covariance(&self) -> Matrix4<T> {
        Matrix4::from_diagonal(&self.r_diag)
    }
}

impl<T: Real> Default for NoiseConfig<T> {
    /// `R = diag(1, 0.5, 0.5, 5)`, `sigma_a = 1`.
    fn default() -> Self {
        Self {
            r_diag: Vector4::new(lit(1.0), lit(0.5), lit(0.5), lit(5.0)),
            sigma_a: T::one(),
        }
    }
}

/// Geometry the measurement model needs at measurement time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterContext<T: Real> {
    pub pose: UavPose<T>,
}

impl<T: Real> FilterContext<T> {
    pub fn new(pose: UavPose<T>) -> Self {
        Self { pose }
    }
}

/// `Q = I * sigma_a * T^4 / 3`
pub fn process_noise<T: Real>(gap: T, cfg: &NoiseConfig<T>) -> Matrix3<T> {
    let t2 = gap * gap;
    Matrix3::identity() * (cfg.sigma_a * t2 * t2 / lit(3.0))
}

/// Stationary-target prediction over a gap of `gap` seconds.
pub fn predict<T: Real>(
    state: &EkfState<T>,
    gap: T,
    cfg: &NoiseConfig<T>,
) -> Result<EkfState<T>, FilterError> {
    if !(gap.is_finite() && gap > T::zero()) {
        return Err(FilterError::InvalidGap(f(gap)));
    }
    Ok(EkfState {
        x: state.x,
        p: state.p + process_noise(gap, cfg),
        last_update_time: state.last_update_time,
    })
}

fn camera_point<T: Real>(
    x: &Position3<T>,
    ctx: &FilterContext<T>,
) -> Result<Position3<T>, FilterError> {
    let p_c = ctx.pose.inertial_to_camera(x);
    if !(p_c.x > T::zero()) {
        return Err(FilterError::BehindCamera(f(p_c.x)));
    }
    Ok(p_c)
}

/// Predicted `[r, alpha, eps, h]` for a target at `x`.
pub fn measurement_model<T: Real>(
    x: &Position3<T>,
    ctx: &FilterContext<T>,
) -> Result<Vector4<T>, FilterError> {
    let p_c = camera_point(x, ctx)?;
    Ok(Vector4::new(
        p_c.norm(),
        (p_c.y / p_c.x).atan(),
        (p_c.z / p_c.x).atan(),
        x.z + ctx.pose.altitude(),
    ))
}

/// `dz/dx`: the camera-frame partials chained through `R_PB * R_BI`, with
/// `[0, 0, 1]` as the height row.
pub fn jacobian<T: Real>(
    x: &Position3<T>,
    ctx: &FilterContext<T>,
) -> Result<Matrix4x3<T>, FilterError> {
    let p_c = camera_point(x, ctx)?;
    let (xc, yc, zc) = (p_c.x, p_c.y, p_c.z);
    let r = p_c.norm();
    let dxy = xc * xc + yc * yc;
    let dxz = xc * xc + zc * zc;
    let floor = lit::<T>(JACOBIAN_SINGULARITY);
    if !(dxy > floor && dxz > floor) {
        return Err(FilterError::SingularJacobian);
    }
    let zero = T::zero();
    let d_camera = Matrix3::new(
        xc / r,
        yc / r,
        zc / r,
        -yc / dxy,
        xc / dxy,
        zero,
        -zc / dxz,
        zero,
        xc / dxz,
    );
    let top = d_camera * ctx.pose.camera_from_inertial().matrix();
    let mut h = Matrix4x3::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&top);
    h[(3, 2)] = T::one();
    Ok(h)
}

/// `z - z_pred` with the two angle rows wrapped into `(-pi, pi]`.
pub fn innovation<T: Real>(z: &Vector4<T>, predicted: &Vector4<T>) -> Vector4<T> {
    let mut y = z - predicted;
    y[1] = wrap_angle(y[1]);
    y[2] = wrap_angle(y[2]);
    y
}

/// Result of a measurement update, with the residual that was applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome<T: Real> {
    pub state: EkfState<T>,
    pub innovation: Vector4<T>,
}

/// EKF measurement update on a predicted state. The covariance is updated in
/// Joseph form.
pub fn update<T: Real>(
    predicted: &EkfState<T>,
    z: &Measurement<T>,
    ctx: &FilterContext<T>,
    cfg: &NoiseConfig<T>,
) -> Result<EkfState<T>, FilterError> {
    update_with_innovation(predicted, z, ctx, cfg).map(|o| o.state)
}

/// [`update`], also returning the innovation.
pub fn update_with_innovation<T: Real>(
    predicted: &EkfState<T>,
    z: &Measurement<T>,
    ctx: &FilterContext<T>,
    cfg: &NoiseConfig<T>,
) -> Result<UpdateOutcome<T>, FilterError> {
    let x_bar = predicted.x;
    let p_bar = predicted.p;
    let z_pred = measurement_model(&x_bar, ctx)?;
    let h = jacobian(&x_bar, ctx)?;
    let r = cfg.measurement_covariance();

    let y = innovation(&z.as_vector(), &z_pred);
    let hp = h * p_bar;
    let s = hp * h.transpose() + r;
    let chol = s.cholesky().ok_or(FilterError::SingularInnovation)?;
    // K = P H^T S^-1 = (S^-1 H P)^T since P and S are symmetric.
    let gain = chol.solve(&hp).transpose();

    let x = x_bar + gain * y;
    let i_kh = Matrix3::identity() - gain * h;
    let p = i_kh * p_bar * i_kh.transpose() + gain * r * gain.transpose();
    let p = (p + p.transpose()) * lit::<T>(0.5);

    Ok(UpdateOutcome {
        state: EkfState {
            x,
            p,
            last_update_time: z.time,
        },
        innovation: y,
    })
}

/// First-frame initialization: the geometric solve of `z`'s bearings and
/// range, with unit covariance.
pub fn initialize<T: Real>(
    z: &Measurement<T>,
    ctx: &FilterContext<T>,
) -> Result<EkfState<T>, FilterError> {
    let bearings = BearingPair::new(z.azimuth, z.elevation)?;
    let x = solve_from_bearings(&bearings, z.range, &ctx.pose)?;
    Ok(EkfState {
        x,
        p: Matrix3::identity(),
        last_update_time: z.time,
    })
}

/// One pass of the estimation loop for a valid measurement: initialize on
/// the first frame, otherwise predict over the gap since the last update and
/// apply the measurement.
pub fn ekf_step<T: Real>(
    state: Option<&EkfState<T>>,
    z: &Measurement<T>,
    fov: &CameraFov<T>,
    ctx: &FilterContext<T>,
    cfg: &NoiseConfig<T>,
) -> Result<EkfState<T>, FilterError> {
    check_in_fov(z, fov)?;
    match state {
        None => initialize(z, ctx),
        Some(state) => {
            if !(z.time > state.last_update_time) {
                return Err(FilterError::NonMonotonicTime {
                    time: f(z.time),
                    last: f(state.last_update_time),
                });
            }
            let gap = z.time - state.last_update_time;
            let predicted = predict(state, gap, cfg)?;
            update(&predicted, z, ctx, cfg)
        }
    }
}

fn check_in_fov<T: Real>(z: &Measurement<T>, fov: &CameraFov<T>) -> Result<(), FilterError> {
    let slack = lit::<T>(1e-9);
    let half = lit::<T>(0.5);
    if z.azimuth.abs() > fov.horizontal() * half + slack
        || z.elevation.abs() > fov.vertical() * half + slack
    {
        return Err(FilterError::OutsideFov {
            azimuth: f(z.azimuth),
            elevation: f(z.elevation),
        });
    }
    Ok(())
}

/// Admission rule for detections before they reach any estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementGate<T> {
    pub min_confidence: T,
}

impl<T: Real> MeasurementGate<T> {
    pub fn new(min_confidence: T) -> Self {
        Self { min_confidence }
    }

    /// A detection paired with a datalink range is usable when the detector
    /// is confident enough and the range is positive.
    pub fn admits(&self, detection: &Detection<T>, range: T) -> bool {
        detection.confidence() >= self.min_confidence && range.is_finite() && range > T::zero()
    }
}

/// Turns a gated detection and range into a filter measurement.
pub fn measurement_from_detection<T: Real>(
    detection: &Detection<T>,
    range: T,
    fov: &CameraFov<T>,
    pose: &UavPose<T>,
) -> Result<Measurement<T>, FilterError> {
    let b = crate::geoloc::pixel_to_bearings(detection.u(), detection.v(), fov)?;
    Measurement::new(
        range,
        b.azimuth(),
        b.elevation(),
        pose.altitude(),
        detection.time(),
    )
}

/// Mean of every geometric solve so far.
pub fn mean_filter_step<T: Real>(history: &[Position3<T>]) -> Result<Position3<T>, FilterError> {
    if history.is_empty() {
        return Err(FilterError::EmptyHistory);
    }
    let sum = history.iter().fold(Position3::zeros(), |acc, p| acc + p);
    Ok(sum / lit::<T>(history.len() as f64))
}

/// Running form of [`mean_filter_step`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeanFilter<T: Real> {
    sum: Position3<T>,
    count: usize,
}

impl<T: Real> MeanFilter<T> {
    pub fn new() -> Self {
        Self {
            sum: Position3::zeros(),
            count: 0,
        }
    }

    pub fn push(&mut self, sample: &Position3<T>) -> Position3<T> {
        self.sum += sample;
        self.count += 1;
        self.sum / lit::<T>(self.count as f64)
    }

    pub fn estimate(&self) -> Option<Position3<T>> {
        (self.count > 0).then(|| self.sum / lit::<T>(self.count as f64))
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// The unfiltered baseline: the latest geometric solve.
pub fn no_filter_step<T: Real>(latest: &Position3<T>) -> Position3<T> {
    *latest
}
