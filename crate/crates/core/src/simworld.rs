//! Deterministic scenario engine.
//!
//! A UAV hovers at a fixed pose and only its gimbal moves. The USV follows a
//! waypoint list or a velocity schedule with an additive wave drift. Every
//! `measurement_period` the simulated detector and datalink are sampled, the
//! gimbal takes one centering step and all three estimators (EKF, mean
//! filter, no filter) consume the same measurement. One [`TraceRecord`] is
//! produced per simulation step.
//!
//! Randomness comes from two ChaCha8 streams keyed by the scenario seed: one
//! for the sensors and one for the USV jitter, so a run is a pure function of
//! its [`ScenarioConfig`].

use std::f64::consts::TAU;

use nalgebra::Matrix3;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::filters::{
    ekf_step, measurement_from_detection, no_filter_step, EkfState, FilterContext, MeanFilter,
    Measurement, MeasurementGate, NoiseConfig,
};
use crate::frames::{wrap_angle, EulerAngles};
use crate::geoloc::{geometric_solve, CameraFov, UavPose};
use crate::sensing::{
    gimbal_control_step, simulate_detection, simulate_range, Detection, GimbalController,
    SensorNoise,
};

pub type Position3 = crate::Position3<f64>;

/// A configuration problem, tagged with the offending key.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{key}: {message}")]
pub struct ScenarioError {
    pub key: String,
    pub message: String,
}

impl ScenarioError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

/// Kinematic USV state. `position.z` is always the water-plane height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsvState {
    pub position: Position3,
    /// Heading in the ENU frame, radians (0 = east, pi/2 = north).
    pub yaw: f64,
    /// Body-frame forward speed, m/s.
    pub surge: f64,
    /// Body-frame leftward speed, m/s.
    pub sway: f64,
}

/// What the USV is told to do for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UsvCommand {
    /// Hold the given heading and body-frame speeds.
    Velocity { surge: f64, sway: f64, yaw: f64 },
    /// Turn towards `target` at no more than `max_turn_rate` rad/s while
    /// moving forward at `surge`.
    Waypoint {
        target: [f64; 2],
        surge: f64,
        max_turn_rate: f64,
    },
}

/// Wave drift `amplitude * sin(2 pi t / period)` along `heading`, plus
/// per-step Gaussian position jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    /// m/s
    pub amplitude: f64,
    /// s
    pub period: f64,
    /// rad, ENU
    pub heading: f64,
    /// Standard deviation of the per-step position jitter, m.
    pub jitter_sigma: f64,
}

impl Disturbance {
    pub fn calm() -> Self {
        Self {
            amplitude: 0.0,
            period: 1.0,
            heading: 0.0,
            jitter_sigma: 0.0,
        }
    }

    fn wave_velocity(&self, time: f64) -> [f64; 2] {
        if self.amplitude == 0.0 {
            return [0.0, 0.0];
        }
        let s = self.amplitude * (TAU * time / self.period).sin();
        [s * self.heading.cos(), s * self.heading.sin()]
    }
}

/// Advances the USV by `dt` starting at `time`.
pub fn usv_step<R: Rng + ?Sized>(
    state: &UsvState,
    command: &UsvCommand,
    dt: f64,
    time: f64,
    disturbance: &Disturbance,
    rng: &mut R,
) -> UsvState {
    let (yaw, surge, sway) = match *command {
        UsvCommand::Velocity { surge, sway, yaw } => (wrap_angle(yaw), surge, sway),
        UsvCommand::Waypoint {
            target,
            surge,
            max_turn_rate,
        } => {
            let dx = target[0] - state.position.x;
            let dy = target[1] - state.position.y;
            let desired = dy.atan2(dx);
            let max_turn = max_turn_rate * dt;
            let turn = wrap_angle(desired - state.yaw).clamp(-max_turn, max_turn);
            let distance = dx.hypot(dy);
            // Never step past the waypoint.
            let surge = surge.min(distance / dt);
            (wrap_angle(state.yaw + turn), surge, 0.0)
        }
    };
    let (s, c) = yaw.sin_cos();
    let wave = disturbance.wave_velocity(time);
    let mut position = state.position;
    position.x += (c * surge - s * sway + wave[0]) * dt;
    position.y += (s * surge + c * sway + wave[1]) * dt;
    if disturbance.jitter_sigma > 0.0 {
        position.x += disturbance.jitter_sigma * rng.sample::<f64, _>(StandardNormal);
        position.y += disturbance.jitter_sigma * rng.sample::<f64, _>(StandardNormal);
    }
    UsvState {
        position,
        yaw,
        surge,
        sway,
    }
}

/// One piece of a velocity schedule, active from `start` until the next
/// segment begins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySegment {
    pub start: f64,
    pub surge: f64,
    pub sway: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UsvPlan {
    Stationary,
    Waypoints {
        waypoints: Vec<[f64; 2]>,
        surge: f64,
        /// rad/s
        max_turn_rate: f64,
        /// Distance at which a waypoint counts as reached, m.
        acceptance_radius: f64,
    },
    Velocity {
        segments: Vec<VelocitySegment>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsvConfig {
    pub initial_position: [f64; 2],
    pub initial_yaw: f64,
    pub plan: UsvPlan,
}

/// Filter tuning plus the detection admission threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub noise: NoiseConfig<f64>,
    pub min_confidence: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            noise: NoiseConfig::default(),
            min_confidence: 0.5,
        }
    }
}

/// Gimbal sweep used while the USV is not in view: yaw advances by
/// `yaw_step` per measurement slot and reverses at the yaw limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub yaw_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// s
    pub duration: f64,
    /// s
    pub dt: f64,
    /// s
    pub measurement_period: f64,
    pub seed: u64,
    /// z of the water surface in the ENU frame, m.
    pub water_height: f64,
    /// Hover pose; `gimbal` is the initial gimbal orientation.
    pub uav: UavPose<f64>,
    pub fov: CameraFov<f64>,
    pub noise: SensorNoise,
    pub controller: GimbalController<f64>,
    pub usv: UsvConfig,
    pub disturbance: Disturbance,
    pub filter: FilterConfig,
    pub search: Option<SearchConfig>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ScenarioError::new(
                    key,
                    format!("must be positive, got {v}"),
                ))
            }
        };
        positive("dt", self.dt)?;
        positive("duration", self.duration)?;
        positive("measurement_period", self.measurement_period)?;
        if self.duration < self.dt {
            return Err(ScenarioError::new("duration", "must be at least dt"));
        }
        if self.measurement_period < self.dt {
            return Err(ScenarioError::new(
                "measurement_period",
                "must be at least dt",
            ));
        }
        if (self.duration / self.dt) > 1e8 {
            return Err(ScenarioError::new(
                "dt",
                "too many steps for the given duration",
            ));
        }
        if !self.water_height.is_finite() || self.water_height > self.uav.altitude() {
            return Err(ScenarioError::new(
                "water_height",
                "must be finite and below the UAV",
            ));
        }
        self.noise
            .validate()
            .map_err(|e| ScenarioError::new("noise", e.to_string()))?;
        let d = &self.disturbance;
        if !(d.amplitude.is_finite() && d.amplitude >= 0.0) {
            return Err(ScenarioError::new("disturbance.amplitude", "must be >= 0"));
        }
        positive("disturbance.period", d.period)?;
        if !(d.jitter_sigma.is_finite() && d.jitter_sigma >= 0.0) {
            return Err(ScenarioError::new(
                "disturbance.jitter_sigma",
                "must be >= 0",
            ));
        }
        if !(0.0..=1.0).contains(&self.filter.min_confidence) {
            return Err(ScenarioError::new(
                "filter.min_confidence",
                "must be in [0, 1]",
            ));
        }
        match &self.usv.plan {
            UsvPlan::Stationary => {}
            UsvPlan::Waypoints {
                waypoints,
                surge,
                max_turn_rate,
                acceptance_radius,
            } => {
                if waypoints.is_empty() {
                    return Err(ScenarioError::new(
                        "usv.plan.waypoints",
                        "must not be empty",
                    ));
                }
                if !(surge.is_finite() && *surge >= 0.0) {
                    return Err(ScenarioError::new("usv.plan.surge", "must be >= 0"));
                }
                positive("usv.plan.max_turn_rate", *max_turn_rate)?;
                positive("usv.plan.acceptance_radius", *acceptance_radius)?;
            }
            UsvPlan::Velocity { segments } => {
                if segments.windows(2).any(|w| w[1].start <= w[0].start) {
                    return Err(ScenarioError::new(
                        "usv.plan.segments",
                        "start times must increase",
                    ));
                }
            }
        }
        if let Some(search) = &self.search {
            positive("search.yaw_step", search.yaw_step)?;
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Everything observed and estimated at one simulation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub usv_true: Position3,
    pub ekf_estimate: Option<Position3>,
    pub mean_estimate: Option<Position3>,
    pub raw_estimate: Option<Position3>,
    /// The raw detection and datalink range sampled at this step, if any.
    pub detection: Option<(Detection<f64>, f64)>,
    /// The measurement handed to the estimators, if the detection was admitted.
    pub measurement: Option<Measurement<f64>>,
    /// Gimbal orientation in effect when this step's measurement was taken.
    pub gimbal: EulerAngles<f64>,
    /// EKF covariance, m^2.
    pub ekf_covariance: Option<Matrix3<f64>>,
    pub error_2d_ekf: Option<f64>,
    pub error_2d_mean: Option<f64>,
    pub error_2d_raw: Option<f64>,
}

fn error_2d(estimate: Option<Position3>, truth: &Position3) -> Option<f64> {
    estimate.map(|e| (e.x - truth.x).hypot(e.y - truth.y))
}

struct PlanCursor {
    next_waypoint: usize,
}

impl PlanCursor {
    fn command(&mut self, plan: &UsvPlan, state: &UsvState, time: f64) -> UsvCommand {
        match plan {
            UsvPlan::Stationary => UsvCommand::Velocity {
                surge: 0.0,
                sway: 0.0,
                yaw: state.yaw,
            },
            UsvPlan::Velocity { segments } => match segments.iter().rev().find(|s| s.start <= time)
            {
                Some(s) => UsvCommand::Velocity {
                    surge: s.surge,
                    sway: s.sway,
                    yaw: s.yaw,
                },
                None => UsvCommand::Velocity {
                    surge: 0.0,
                    sway: 0.0,
                    yaw: state.yaw,
                },
            },
            UsvPlan::Waypoints {
                waypoints,
                surge,
                max_turn_rate,
                acceptance_radius,
            } => {
                while let Some(wp) = waypoints.get(self.next_waypoint) {
                    let d = (wp[0] - state.position.x).hypot(wp[1] - state.position.y);
                    if d > *acceptance_radius {
                        break;
                    }
                    self.next_waypoint += 1;
                }
                match waypoints.get(self.next_waypoint) {
                    Some(wp) => UsvCommand::Waypoint {
                        target: *wp,
                        surge: *surge,
                        max_turn_rate: *max_turn_rate,
                    },
                    None => UsvCommand::Velocity {
                        surge: 0.0,
                        sway: 0.0,
                        yaw: state.yaw,
                    },
                }
            }
        }
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<TraceRecord>, ScenarioError> {
    cfg.validate()?;

    let mut sensor_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sensor_rng.set_stream(0);
    let mut world_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    world_rng.set_stream(1);

    let gate = MeasurementGate::new(cfg.filter.min_confidence);
    let mut usv = UsvState {
        position: Position3::new(
            cfg.usv.initial_position[0],
            cfg.usv.initial_position[1],
            cfg.water_height,
        ),
        yaw: wrap_angle(cfg.usv.initial_yaw),
        surge: 0.0,
        sway: 0.0,
    };
    let mut cursor = PlanCursor { next_waypoint: 0 };
    let mut gimbal = cfg.uav.gimbal;
    let mut search_direction = -1.0;

    let mut ekf: Option<EkfState<f64>> = None;
    let mut mean = MeanFilter::new();
    let mut raw: Option<Position3> = None;

    let steps = cfg.steps();
    let mut trace = Vec::with_capacity(steps + 1);
    let mut measurements_taken = 0u64;

    for i in 0..=steps {
        let time = i as f64 * cfg.dt;
        let pose = cfg.uav.with_gimbal(gimbal);
        let gimbal_now = gimbal;
        let mut detection_out = None;
        let mut measurement_out = None;

        let slot = measurements_taken as f64 * cfg.measurement_period;
        if time >= slot - 1e-9 * cfg.dt {
            measurements_taken += 1;
            let detection = simulate_detection(
                &usv.position,
                &pose,
                &cfg.fov,
                &cfg.noise,
                time,
                &mut sensor_rng,
            );
            match detection {
                Some(det) => {
                    let range =
                        simulate_range(&usv.position, pose.position(), &cfg.noise, &mut sensor_rng)
                            .range;
                    detection_out = Some((det, range));
                    if gate.admits(&det, range) {
                        match measurement_from_detection(&det, range, &cfg.fov, &pose) {
                            Ok(z) => {
                                measurement_out = Some(z);
                                let ctx = FilterContext::new(pose);
                                match ekf_step(ekf.as_ref(), &z, &cfg.fov, &ctx, &cfg.filter.noise)
                                {
                                    Ok(next) => ekf = Some(next),
                                    Err(e) => warn!("t={time}: EKF rejected measurement: {e}"),
                                }
                                if let Ok(p) = geometric_solve(&det, range, &cfg.fov, &pose) {
                                    mean.push(&p);
                                    raw = Some(no_filter_step(&p));
                                }
                            }
                            Err(e) => warn!("t={time}: unusable detection: {e}"),
                        }
                    } else {
                        debug!(
                            "t={time}: detection gated out (confidence {})",
                            det.confidence()
                        );
                    }
                    gimbal = gimbal_control_step(&gimbal, &det, &cfg.controller);
                }
                None => {
                    if let Some(search) = &cfg.search {
                        let (lo, hi) = cfg.controller.yaw_limits();
                        let mut yaw = gimbal.yaw() + search_direction * search.yaw_step;
                        if yaw < lo || yaw > hi {
                            search_direction = -search_direction;
                            yaw = yaw.clamp(lo, hi);
                        }
                        gimbal = gimbal.with_yaw(yaw);
                    }
                }
            }
        }

        let ekf_estimate = ekf.as_ref().map(|s| *s.x());
        let mean_estimate = mean.estimate();
        trace.push(TraceRecord {
            time,
            usv_true: usv.position,
            ekf_estimate,
            mean_estimate,
            raw_estimate: raw,
            detection: detection_out,
            measurement: measurement_out,
            gimbal: gimbal_now,
            ekf_covariance: ekf.as_ref().map(|s| *s.covariance()),
            error_2d_ekf: error_2d(ekf_estimate, &usv.position),
            error_2d_mean: error_2d(mean_estimate, &usv.position),
            error_2d_raw: error_2d(raw, &usv.position),
        });

        let command = cursor.command(&cfg.usv.plan, &usv, time);
        usv = usv_step(
            &usv,
            &command,
            cfg.dt,
            time,
            &cfg.disturbance,
            &mut world_rng,
        );
        usv.position.z = cfg.water_height;
    }
    Ok(trace)
}

/// The three estimators being compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Ekf,
    MeanFilter,
    NoFilter,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Ekf, Strategy::MeanFilter, Strategy::NoFilter];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Ekf => "ekf",
            Strategy::MeanFilter => "mean_filter",
            Strategy::NoFilter => "no_filter",
        }
    }

    pub fn estimate(&self, record: &TraceRecord) -> Option<Position3> {
        match self {
            Strategy::Ekf => record.ekf_estimate,
            Strategy::MeanFilter => record.mean_estimate,
            Strategy::NoFilter => record.raw_estimate,
        }
    }
}

/// Signed errors (estimate minus truth) at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointError {
    pub strategy: Strategy,
    pub checkpoint: f64,
    /// Time of the record used (the last one at or before the checkpoint).
    pub record_time: f64,
    /// `None` when the strategy had no estimate yet.
    pub error: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub strategy: Strategy,
    pub mean_2d: Option<f64>,
    pub max_2d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Strategy-major, checkpoint-minor.
    pub checkpoints: Vec<CheckpointError>,
    pub summaries: Vec<ErrorSummary>,
}

impl MetricsReport {
    pub fn at(&self, strategy: Strategy, checkpoint: f64) -> Option<&CheckpointError> {
        self.checkpoints
            .iter()
            .find(|c| c.strategy == strategy && c.checkpoint == checkpoint)
    }

    pub fn summary(&self, strategy: Strategy) -> Option<&ErrorSummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }
}

/// Per-strategy X, Y and 2D errors at each checkpoint, plus mean and max 2D
/// error over the whole trace.
pub fn compute_metrics(
    trace: &[TraceRecord],
    checkpoints: &[f64],
) -> Result<MetricsReport, ScenarioError> {
    let (first, last) = match (trace.first(), trace.last()) {
        (Some(f), Some(l)) => (f.time, l.time),
        _ => return Err(ScenarioError::new("trace", "empty trace")),
    };
    let slack = 1e-9 * last.abs().max(1.0);
    for &c in checkpoints {
        if !c.is_finite() || c < first - slack || c > last + slack {
            return Err(ScenarioError::new(
                "checkpoints",
                format!("checkpoint {c} s outside the run [{first}, {last}] s"),
            ));
        }
    }

    let mut rows = Vec::with_capacity(Strategy::ALL.len() * checkpoints.len());
    for strategy in Strategy::ALL {
        for &c in checkpoints {
            let idx = trace.partition_point(|r| r.time <= c + slack).max(1) - 1;
            let record = &trace[idx];
            let error = strategy.estimate(record).map(|e| {
                let dx = e.x - record.usv_true.x;
                let dy = e.y - record.usv_true.y;
                [dx, dy, dx.hypot(dy)]
            });
            rows.push(CheckpointError {
                strategy,
                checkpoint: c,
                record_time: record.time,
                error,
            });
        }
    }

    let summaries = Strategy::ALL
        .iter()
        .map(|&strategy| {
            let errors: Vec<f64> = trace
                .iter()
                .filter_map(|r| error_2d(strategy.estimate(r), &r.usv_true))
                .collect();
            let (mean_2d, max_2d) = if errors.is_empty() {
                (None, None)
            } else {
                (
                    Some(errors.iter().sum::<f64>() / errors.len() as f64),
                    errors.iter().copied().reduce(f64::max),
                )
            };
            ErrorSummary {
                strategy,
                mean_2d,
                max_2d,
            }
        })
        .collect();

    Ok(MetricsReport {
        checkpoints: rows,
        summaries,
    })
}

/// Reference scenarios used by the test suite and shipped as config files.
pub mod canonical {
    use super::*;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    /// Initial gimbal: level yaw, pitched down by atan(7.5 / 300) rounded
    /// to a millidegree.
    fn initial_gimbal() -> EulerAngles<f64> {
        EulerAngles::new(0.0, deg(-1.432), 0.0).unwrap()
    }

    fn controller() -> GimbalController<f64> {
        GimbalController::new(
            0.02,
            0.02,
            (deg(-90.0), deg(30.0)),
            (deg(-180.0), deg(180.0)),
            0.0,
        )
        .unwrap()
    }

    /// Stationary USV 300 m north of a UAV hovering at 7.5 m, 1 Hz
    /// measurements for 200 s.
    pub fn stationary(seed: u64) -> ScenarioConfig {
        let target = [0.0, 300.0];
        ScenarioConfig {
            duration: 200.0,
            dt: 0.1,
            measurement_period: 1.0,
            seed,
            water_height: 0.0,
            uav: UavPose::new(
                Position3::new(0.0, 0.0, 7.5),
                EulerAngles::new(0.0, 0.0, deg(90.0)).unwrap(),
                initial_gimbal(),
            )
            .unwrap(),
            fov: CameraFov::new(deg(5.0), deg(3.75)).unwrap(),
            noise: SensorNoise::new(0.01, 1.0, 0.0, 0.6).unwrap(),
            controller: controller(),
            usv: UsvConfig {
                initial_position: target,
                initial_yaw: 0.0,
                plan: UsvPlan::Stationary,
            },
            disturbance: Disturbance::calm(),
            filter: FilterConfig::default(),
            search: None,
        }
    }

    /// USV runs north towards the UAV's station, then turns east, at
    /// 2 m/s under a 0.3 m/s wave drift.
    pub fn moving(seed: u64) -> ScenarioConfig {
        let start = [0.0, 300.0];
        ScenarioConfig {
            duration: 200.0,
            dt: 0.1,
            measurement_period: 1.0,
            seed,
            water_height: 0.0,
            uav: UavPose::new(
                Position3::new(0.0, 0.0, 7.5),
                EulerAngles::new(0.0, 0.0, deg(90.0)).unwrap(),
                initial_gimbal(),
            )
            .unwrap(),
            fov: CameraFov::new(deg(5.0), deg(3.75)).unwrap(),
            noise: SensorNoise::new(0.01, 1.0, 0.0, 0.6).unwrap(),
            controller: controller(),
            usv: UsvConfig {
                initial_position: start,
                initial_yaw: deg(90.0),
                plan: UsvPlan::Waypoints {
                    waypoints: vec![[0.0, 500.0], [200.0, 500.0]],
                    surge: 2.0,
                    max_turn_rate: deg(10.0),
                    acceptance_radius: 2.0,
                },
            },
            disturbance: Disturbance {
                amplitude: 0.3,
                period: 8.0,
                heading: deg(90.0),
                jitter_sigma: 0.0,
            },
            filter: FilterConfig::default(),
            search: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn at(x: f64, y: f64) -> UsvState {
        UsvState {
            position: Position3::new(x, y, 0.0),
            yaw: 0.0,
            surge: 0.0,
            sway: 0.0,
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn still_water_zero_speed_stays_put() {
        let s = at(5.0, -3.0);
        let cmd = UsvCommand::Velocity {
            surge: 0.0,
            sway: 0.0,
            yaw: 1.0,
        };
        let next = usv_step(&s, &cmd, 1.0, 0.0, &Disturbance::calm(), &mut rng());
        assert_eq!(next.position, s.position);
    }

    #[test]
    fn surge_east_moves_x() {
        let cmd = UsvCommand::Velocity {
            surge: 1.0,
            sway: 0.0,
            yaw: 0.0,
        };
        let next = usv_step(
            &at(0.0, 0.0),
            &cmd,
            1.0,
            0.0,
            &Disturbance::calm(),
            &mut rng(),
        );
        assert_eq!(next.position, Position3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn wave_drift_follows_heading() {
        let d = Disturbance {
            amplitude: 0.5,
            period: 4.0,
            heading: std::f64::consts::FRAC_PI_2,
            jitter_sigma: 0.0,
        };
        let cmd = UsvCommand::Velocity {
            surge: 0.0,
            sway: 0.0,
            yaw: 0.0,
        };
        // sin(2 pi * 1 / 4) = 1
        let next = usv_step(&at(0.0, 0.0), &cmd, 0.1, 1.0, &d, &mut rng());
        assert_relative_eq!(next.position.y, 0.05, epsilon = 1e-15);
        assert_relative_eq!(next.position.x, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn waypoint_turns_then_closes_monotonically() {
        let target = [0.0, 100.0];
        let cmd = UsvCommand::Waypoint {
            target,
            surge: 2.0,
            max_turn_rate: 10f64.to_radians(),
        };
        let mut s = at(0.0, 0.0);
        let mut aligned_at = None;
        let mut last_distance = f64::INFINITY;
        let mut r = rng();
        for k in 0..600 {
            s = usv_step(&s, &cmd, 0.1, k as f64 * 0.1, &Disturbance::calm(), &mut r);
            let heading_error = wrap_angle(std::f64::consts::FRAC_PI_2 - s.yaw).abs();
            let distance = (target[0] - s.position.x).hypot(target[1] - s.position.y);
            if aligned_at.is_none() && heading_error < 1e-3 {
                aligned_at = Some(k);
                last_distance = distance;
            } else if aligned_at.is_some() {
                assert!(distance <= last_distance + 1e-12);
                last_distance = distance;
            }
        }
        // 90 degrees at 10 deg/s takes 9 s = 90 steps.
        assert_eq!(aligned_at, Some(89));
        assert!(last_distance < 1e-9);
    }

    fn noiseless_stationary() -> ScenarioConfig {
        let mut cfg = canonical::stationary(1);
        cfg.noise = SensorNoise::noiseless();
        cfg.duration = 10.0;
        cfg
    }

    #[test]
    fn noiseless_stationary_run_is_exact() {
        let trace = run_scenario(&noiseless_stationary()).unwrap();
        assert_eq!(trace.len(), 101);
        for r in &trace {
            let e = r.ekf_estimate.unwrap();
            assert!((e - r.usv_true).norm() < 1e-6);
        }
    }

    #[test]
    fn water_plane_is_pinned() {
        let mut cfg = canonical::moving(3);
        cfg.water_height = -1.25;
        cfg.disturbance.jitter_sigma = 0.05;
        for r in run_scenario(&cfg).unwrap() {
            assert_eq!(r.usv_true.z, -1.25);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = canonical::moving(42);
        assert_eq!(run_scenario(&cfg).unwrap(), run_scenario(&cfg).unwrap());
    }

    #[test]
    fn error_fields_are_planar_distances() {
        for r in run_scenario(&canonical::moving(5)).unwrap() {
            for (est, err) in [
                (r.ekf_estimate, r.error_2d_ekf),
                (r.mean_estimate, r.error_2d_mean),
                (r.raw_estimate, r.error_2d_raw),
            ] {
                let (e, err) = (est.unwrap(), err.unwrap());
                let ex = e.x - r.usv_true.x;
                let ey = e.y - r.usv_true.y;
                assert!((err - (ex * ex + ey * ey).sqrt()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn coasting_holds_mean_and_covariance_grows_not() {
        let mut cfg = canonical::stationary(8);
        cfg.noise.miss_probability = 0.5;
        let trace = run_scenario(&cfg).unwrap();
        let mut gaps = 0;
        for w in trace.windows(2) {
            if w[1].measurement.is_none() {
                if let (Some(a), Some(b)) = (w[0].ekf_estimate, w[1].ekf_estimate) {
                    assert_eq!(a, b);
                    let (pa, pb) = (w[0].ekf_covariance.unwrap(), w[1].ekf_covariance.unwrap());
                    assert!(pb.trace() >= pa.trace());
                    gaps += 1;
                }
            }
        }
        assert!(gaps > 0);
    }

    #[test]
    fn invalid_configs_name_their_key() {
        let mut cfg = canonical::stationary(1);
        cfg.dt = 0.0;
        assert_eq!(run_scenario(&cfg).unwrap_err().key, "dt");
        let mut cfg = canonical::stationary(1);
        cfg.measurement_period = 0.05;
        assert_eq!(run_scenario(&cfg).unwrap_err().key, "measurement_period");
        let mut cfg = canonical::stationary(1);
        cfg.duration = 0.01;
        assert_eq!(run_scenario(&cfg).unwrap_err().key, "duration");
    }

    #[test]
    fn search_sweeps_until_target_found() {
        let mut cfg = canonical::stationary(4);
        cfg.uav.gimbal = cfg.uav.gimbal.with_yaw(60f64.to_radians());
        cfg.search = Some(SearchConfig {
            yaw_step: 2f64.to_radians(),
        });
        cfg.noise = SensorNoise::noiseless();
        let trace = run_scenario(&cfg).unwrap();
        assert!(trace[0].detection.is_none());
        assert!(trace.iter().any(|r| r.measurement.is_some()));
    }

    fn record(t: f64, truth: [f64; 2], est: Option<[f64; 2]>) -> TraceRecord {
        let p = |v: [f64; 2]| Position3::new(v[0], v[1], 0.0);
        let est = est.map(p);
        let truth = p(truth);
        TraceRecord {
            time: t,
            usv_true: truth,
            ekf_estimate: est,
            mean_estimate: est,
            raw_estimate: est,
            detection: None,
            measurement: None,
            gimbal: EulerAngles::zero(),
            ekf_covariance: None,
            error_2d_ekf: error_2d(est, &truth),
            error_2d_mean: error_2d(est, &truth),
            error_2d_raw: error_2d(est, &truth),
        }
    }

    #[test]
    fn metrics_of_perfect_estimates_are_zero() {
        let trace: Vec<_> = (0..=100)
            .map(|k| record(k as f64, [k as f64, 1.0], Some([k as f64, 1.0])))
            .collect();
        let m = compute_metrics(&trace, &[10.0, 50.0, 100.0]).unwrap();
        assert_eq!(m.checkpoints.len(), 9);
        for c in &m.checkpoints {
            assert_eq!(c.error, Some([0.0, 0.0, 0.0]));
        }
        for s in &m.summaries {
            assert_eq!((s.mean_2d, s.max_2d), (Some(0.0), Some(0.0)));
        }
    }

    #[test]
    fn metrics_of_constant_offset() {
        let trace: Vec<_> = (0..=100)
            .map(|k| record(k as f64, [0.0, 0.0], Some([3.0, 4.0])))
            .collect();
        let m = compute_metrics(&trace, &[10.0, 50.0, 100.0]).unwrap();
        for c in &m.checkpoints {
            assert_eq!(c.error, Some([3.0, 4.0, 5.0]));
        }
        let s = m.summary(Strategy::Ekf).unwrap();
        assert_eq!((s.mean_2d, s.max_2d), (Some(5.0), Some(5.0)));
    }

    #[test]
    fn checkpoint_uses_record_at_or_before() {
        let trace: Vec<_> = (0..=10)
            .map(|k| record(k as f64 * 2.0, [0.0, 0.0], Some([k as f64, 0.0])))
            .collect();
        let m = compute_metrics(&trace, &[5.0]).unwrap();
        let c = m.at(Strategy::NoFilter, 5.0).unwrap();
        assert_eq!(c.record_time, 4.0);
        assert_eq!(c.error.unwrap()[0], 2.0);
    }

    #[test]
    fn metrics_reject_bad_inputs() {
        assert!(compute_metrics(&[], &[1.0]).is_err());
        let trace: Vec<_> = (0..=10)
            .map(|k| record(k as f64, [0.0, 0.0], None))
            .collect();
        assert_eq!(
            compute_metrics(&trace, &[11.0]).unwrap_err().key,
            "checkpoints"
        );
        let m = compute_metrics(&trace, &[5.0]).unwrap();
        assert_eq!(m.at(Strategy::Ekf, 5.0).unwrap().error, None);
        assert_eq!(m.summary(Strategy::Ekf).unwrap().mean_2d, None);
    }
}
