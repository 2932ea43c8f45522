//! Forward camera model, simulated detector and datalink range sensor, and
//! the gimbal centering controller.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::frames::{wrap_angle, EulerAngles};
use crate::geoloc::{CameraFov, UavPose};
use crate::{lit, Position3, Real};

/// Smallest range the simulated datalink reports, meters.
pub const RANGE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensingError {
    #[error("detection ({u}, {v}) outside [-1, 1]")]
    PixelOutOfRange { u: f64, v: f64 },
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("invalid sensor noise: {0}")]
    Noise(&'static str),
    #[error("invalid gimbal controller: {0}")]
    Controller(&'static str),
}

/// A detector output: normalized pixel error of the bounding-box center
/// relative to the image center. `u > 0` is right of center, `v > 0` below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T> {
    u: T,
    v: T,
    confidence: T,
    time: T,
}

impl<T: Real> Detection<T> {
    pub fn new(u: T, v: T, confidence: T, time: T) -> Result<Self, SensingError> {
        let unit = |x: T| x.is_finite() && x.abs() <= T::one();
        if !unit(u) || !unit(v) {
            return Err(SensingError::PixelOutOfRange {
                u: u.to_f64().unwrap_or(f64::NAN),
                v: v.to_f64().unwrap_or(f64::NAN),
            });
        }
        if !(confidence >= T::zero() && confidence <= T::one()) {
            return Err(SensingError::Confidence(
                confidence.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(Self {
            u,
            v,
            confidence,
            time,
        })
    }

    pub fn u(&self) -> T {
        self.u
    }

    pub fn v(&self) -> T {
        self.v
    }

    pub fn confidence(&self) -> T {
        self.confidence
    }

    pub fn time(&self) -> T {
        self.time
    }
}

/// Noise model of the simulated detector and datalink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorNoise {
    /// Standard deviation of `u` and `v`, normalized units.
    pub pixel_sigma: f64,
    /// Standard deviation of the datalink range, meters.
    pub range_sigma: f64,
    pub miss_probability: f64,
    /// Confidences are drawn uniformly from `[confidence_floor, 1]`.
    pub confidence_floor: f64,
}

impl SensorNoise {
    pub fn new(
        pixel_sigma: f64,
        range_sigma: f64,
        miss_probability: f64,
        confidence_floor: f64,
    ) -> Result<Self, SensingError> {
        let noise = Self {
            pixel_sigma,
            range_sigma,
            miss_probability,
            confidence_floor,
        };
        noise.validate()?;
        Ok(noise)
    }

    pub fn noiseless() -> Self {
        Self {
            pixel_sigma: 0.0,
            range_sigma: 0.0,
            miss_probability: 0.0,
            confidence_floor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SensingError> {
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !nonneg(self.pixel_sigma) {
            return Err(SensingError::Noise("pixel_sigma must be >= 0"));
        }
        if !nonneg(self.range_sigma) {
            return Err(SensingError::Noise("range_sigma must be >= 0"));
        }
        if !(nonneg(self.miss_probability) && self.miss_probability < 1.0) {
            return Err(SensingError::Noise("miss_probability must be in [0, 1)"));
        }
        if !(nonneg(self.confidence_floor) && self.confidence_floor <= 1.0) {
            return Err(SensingError::Noise("confidence_floor must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Projects a world point into normalized pixel errors. `None` when the point
/// is behind the camera or outside the field of view.
pub fn project<T: Real>(
    p_world: &Position3<T>,
    pose: &UavPose<T>,
    fov: &CameraFov<T>,
) -> Option<(T, T)> {
    let p_c = pose.inertial_to_camera(p_world);
    if !(p_c.x > T::zero()) {
        return None;
    }
    // tan(alpha) = y_c / x_c, tan(eps) = z_c / x_c
    let u = -(p_c.y / p_c.x) / fov.half_tan_horizontal();
    let v = -(p_c.z / p_c.x) / fov.half_tan_vertical();
    if u.abs() > T::one() || v.abs() > T::one() {
        return None;
    }
    Some((u, v))
}

/// One draw of the detector. Deterministic for a given RNG state.
pub fn simulate_detection<T: Real, R: Rng + ?Sized>(
    p_usv: &Position3<T>,
    pose: &UavPose<T>,
    fov: &CameraFov<T>,
    noise: &SensorNoise,
    time: T,
    rng: &mut R,
) -> Option<Detection<T>> {
    let (u, v) = project(p_usv, pose, fov)?;
    if noise.miss_probability > 0.0 && rng.random::<f64>() < noise.miss_probability {
        return None;
    }
    let (u, v) = if noise.pixel_sigma > 0.0 {
        let du: f64 = rng.sample(StandardNormal);
        let dv: f64 = rng.sample(StandardNormal);
        let one = T::one();
        (
            (u + lit::<T>(noise.pixel_sigma * du)).clamp(-one, one),
            (v + lit::<T>(noise.pixel_sigma * dv)).clamp(-one, one),
        )
    } else {
        (u, v)
    };
    let confidence = if noise.confidence_floor < 1.0 {
        rng.random_range(noise.confidence_floor..=1.0)
    } else {
        1.0
    };
    Detection::new(u, v, lit(confidence), time).ok()
}

/// A datalink range reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSample<T> {
    pub range: T,
    /// The noisy value fell below [`RANGE_FLOOR`] and was raised to it.
    pub floored: bool,
}

/// True distance plus Gaussian noise, floored at [`RANGE_FLOOR`].
pub fn simulate_range<T: Real, R: Rng + ?Sized>(
    p_usv: &Position3<T>,
    p_uav: &Position3<T>,
    noise: &SensorNoise,
    rng: &mut R,
) -> RangeSample<T> {
    let mut range = (p_usv - p_uav).norm();
    if noise.range_sigma > 0.0 {
        let n: f64 = rng.sample(StandardNormal);
        range += lit::<T>(noise.range_sigma * n);
    }
    let floor = lit::<T>(RANGE_FLOOR);
    if range < floor {
        RangeSample {
            range: floor,
            floored: true,
        }
    } else {
        RangeSample {
            range,
            floored: false,
        }
    }
}

/// Proportional gimbal controller with deadband and angle limits.
///
/// Each step moves yaw by `-gain_azimuth * u` and pitch by
/// `-gain_elevation * v` radians. For a static target near the boresight the
/// pixel error contracts by roughly `1 - gain / tan(fov / 2)` per step, so
/// the loop converges without overshoot while `gain < tan(fov / 2)` on each
/// axis and stays stable up to twice that.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GimbalController<T> {
    gain_azimuth: T,
    gain_elevation: T,
    pitch_limits: (T, T),
    yaw_limits: (T, T),
    deadband: T,
}

impl<T: Real> GimbalController<T> {
    pub fn new(
        gain_azimuth: T,
        gain_elevation: T,
        pitch_limits: (T, T),
        yaw_limits: (T, T),
        deadband: T,
    ) -> Result<Self, SensingError> {
        if !(gain_azimuth > T::zero() && gain_elevation > T::zero()) {
            return Err(SensingError::Controller("gains must be > 0"));
        }
        if !(pitch_limits.0 <= pitch_limits.1) {
            return Err(SensingError::Controller("pitch limits must be ordered"));
        }
        if !(yaw_limits.0 <= yaw_limits.1) {
            return Err(SensingError::Controller("yaw limits must be ordered"));
        }
        if !(deadband >= T::zero()) {
            return Err(SensingError::Controller("deadband must be >= 0"));
        }
        Ok(Self {
            gain_azimuth,
            gain_elevation,
            pitch_limits,
            yaw_limits,
            deadband,
        })
    }

    pub fn gain_azimuth(&self) -> T {
        self.gain_azimuth
    }

    pub fn gain_elevation(&self) -> T {
        self.gain_elevation
    }

    pub fn pitch_limits(&self) -> (T, T) {
        self.pitch_limits
    }

    pub fn yaw_limits(&self) -> (T, T) {
        self.yaw_limits
    }

    pub fn deadband(&self) -> T {
        self.deadband
    }
}

/// One centering step.
pub fn gimbal_control_step<T: Real>(
    gimbal: &EulerAngles<T>,
    detection: &Detection<T>,
    ctrl: &GimbalController<T>,
) -> EulerAngles<T> {
    let (u, v) = (detection.u(), detection.v());
    if u.abs().max(v.abs()) <= ctrl.deadband {
        return *gimbal;
    }
    let pitch =
        (gimbal.pitch() - ctrl.gain_elevation * v).clamp(ctrl.pitch_limits.0, ctrl.pitch_limits.1);
    let raw_yaw = gimbal.yaw() - ctrl.gain_azimuth * u;
    let (lo, hi) = ctrl.yaw_limits;
    let yaw = if hi - lo >= T::two_pi() {
        wrap_angle(raw_yaw)
    } else {
        raw_yaw.clamp(lo, hi)
    };
    gimbal.with_pitch(pitch).with_yaw(yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geoloc::geometric_solve;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fov() -> CameraFov<f64> {
        CameraFov::from_degrees(60.0, 45.0).unwrap()
    }

    fn level_pose() -> UavPose<f64> {
        UavPose::hovering(7.5, EulerAngles::zero()).unwrap()
    }

    fn controller(gain: f64) -> GimbalController<f64> {
        GimbalController::new(gain, gain, (-1.5, 0.5), (-3.0, 3.0), 0.0).unwrap()
    }

    fn std_dev(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn boresight_projects_to_center() {
        let (u, v) = project(&Position3::new(80.0, 0.0, 7.5), &level_pose(), &fov()).unwrap();
        assert_eq!((u, v), (0.0, 0.0));
    }

    #[test]
    fn behind_camera_is_not_visible() {
        assert!(project(&Position3::new(-80.0, 0.0, 7.5), &level_pose(), &fov()).is_none());
        assert!(project(&Position3::new(0.0, 0.0, 7.5), &level_pose(), &fov()).is_none());
    }

    #[test]
    fn outside_fov_is_not_visible() {
        // 60 degrees off-axis with a 60 degree FOV.
        assert!(project(&Position3::new(50.0, 86.6, 7.5), &level_pose(), &fov()).is_none());
    }

    #[test]
    fn rightward_target_has_positive_u() {
        let (u, _) = project(&Position3::new(80.0, -5.0, 7.5), &level_pose(), &fov()).unwrap();
        let (u2, _) = project(&Position3::new(80.0, -10.0, 7.5), &level_pose(), &fov()).unwrap();
        assert!(u > 0.0 && u2 > u);
        let (_, v) = project(&Position3::new(80.0, 0.0, 0.0), &level_pose(), &fov()).unwrap();
        assert!(v > 0.0, "target below the horizon should have v > 0");
    }

    #[test]
    fn noiseless_detection_is_exact_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = Position3::new(120.0, 14.0, 0.0);
        let det = simulate_detection(
            &target,
            &level_pose(),
            &fov(),
            &SensorNoise::noiseless(),
            2.0,
            &mut rng,
        )
        .unwrap();
        let (u, v) = project(&target, &level_pose(), &fov()).unwrap();
        assert_eq!(
            (det.u(), det.v(), det.confidence(), det.time()),
            (u, v, 1.0, 2.0)
        );
        let p = geometric_solve(
            &det,
            (target - level_pose().position()).norm(),
            &fov(),
            &level_pose(),
        )
        .unwrap();
        assert_relative_eq!(p, target, epsilon = 1e-9);
    }

    #[test]
    fn near_certain_miss_drops_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = SensorNoise::new(0.0, 0.0, 1.0 - 1e-15, 0.0).unwrap();
        let target = Position3::new(120.0, 0.0, 0.0);
        let hits = (0..1000)
            .filter(|_| {
                simulate_detection(&target, &level_pose(), &fov(), &noise, 0.0, &mut rng).is_some()
            })
            .count();
        assert_eq!(hits, 0);
    }

    #[test]
    fn pixel_noise_has_configured_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = SensorNoise::new(0.01, 0.0, 0.0, 0.5).unwrap();
        let target = Position3::new(120.0, 0.0, 7.5);
        let us: Vec<f64> = (0..10_000)
            .map(|_| {
                let d = simulate_detection(&target, &level_pose(), &fov(), &noise, 0.0, &mut rng)
                    .unwrap();
                assert!((0.5..=1.0).contains(&d.confidence()));
                d.u()
            })
            .collect();
        let s = std_dev(&us);
        assert!((0.009..=0.011).contains(&s), "std {s}");
    }

    #[test]
    fn same_seed_same_detections() {
        let noise = SensorNoise::new(0.05, 1.0, 0.2, 0.3).unwrap();
        let target = Position3::new(120.0, 10.0, 0.0);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|_| simulate_detection(&target, &level_pose(), &fov(), &noise, 0.0, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn noiseless_range_is_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = simulate_range(
            &Position3::new(3.0, 4.0, 0.0),
            &Position3::zeros(),
            &SensorNoise::noiseless(),
            &mut rng,
        );
        assert_eq!(
            s,
            RangeSample {
                range: 5.0,
                floored: false
            }
        );
    }

    #[test]
    fn coincident_points_hit_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Position3::new(1.0, 1.0, 1.0);
        let s = simulate_range(&p, &p, &SensorNoise::noiseless(), &mut rng);
        assert!(s.floored);
        assert_eq!(s.range, RANGE_FLOOR);
    }

    #[test]
    fn range_noise_has_configured_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noise = SensorNoise::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let rs: Vec<f64> = (0..10_000)
            .map(|_| {
                simulate_range(
                    &Position3::new(300.0, 0.0, 0.0),
                    &Position3::zeros(),
                    &noise,
                    &mut rng,
                )
                .range
            })
            .collect();
        let s = std_dev(&rs);
        assert!((0.95..=1.05).contains(&s), "std {s}");
    }

    #[test]
    fn noise_validation() {
        assert!(SensorNoise::new(-0.1, 0.0, 0.0, 0.0).is_err());
        assert!(SensorNoise::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(SensorNoise::new(0.0, 0.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn controller_validation() {
        assert!(GimbalController::new(0.0, 0.2, (-1.0, 0.0), (-1.0, 1.0), 0.0).is_err());
        assert!(GimbalController::new(0.2, 0.2, (0.0, -1.0), (-1.0, 1.0), 0.0).is_err());
        assert!(GimbalController::new(0.2, 0.2, (-1.0, 0.0), (-1.0, 1.0), -0.1).is_err());
    }

    #[test]
    fn centered_detection_leaves_gimbal() {
        let g = EulerAngles::new(0.0, -0.3, 0.4).unwrap();
        let det = Detection::new(0.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(gimbal_control_step(&g, &det, &controller(0.2)), g);
    }

    #[test]
    fn deadband_holds_gimbal() {
        let ctrl = GimbalController::new(0.2, 0.2, (-1.5, 0.5), (-3.0, 3.0), 0.05).unwrap();
        let g = EulerAngles::new(0.0, -0.3, 0.4).unwrap();
        let det = Detection::new(0.04, -0.05, 1.0, 0.0).unwrap();
        assert_eq!(gimbal_control_step(&g, &det, &ctrl), g);
    }

    #[test]
    fn pitch_saturates_at_limit() {
        let g = EulerAngles::new(0.0, -1.45, 0.0).unwrap();
        let det = Detection::new(0.0, 1.0, 1.0, 0.0).unwrap();
        let out = gimbal_control_step(&g, &det, &controller(0.2));
        assert_eq!(out.pitch(), -1.5);
    }

    #[test]
    fn closed_loop_centers_offset_target() {
        let fov = fov();
        let ctrl = controller(0.2);
        let pose = level_pose();
        // Start with the target at u = 0.8 on the horizon line of a level camera.
        let x = 100.0;
        let target = Position3::new(x, -0.8 * fov.half_tan_horizontal() * x, 7.5);
        let mut gimbal = EulerAngles::zero();
        let mut reached = None;
        for step in 0..50 {
            let (u, v) = project(&target, &pose.with_gimbal(gimbal), &fov).unwrap();
            if step == 0 {
                assert_relative_eq!(u, 0.8, epsilon = 1e-12);
            }
            if u.abs() < 0.05 && reached.is_none() {
                reached = Some(step);
            }
            let det = Detection::new(u, v, 1.0, 0.0).unwrap();
            gimbal = gimbal_control_step(&gimbal, &det, &ctrl);
        }
        assert!(reached.is_some());
    }
}
