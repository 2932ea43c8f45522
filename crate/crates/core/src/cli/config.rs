//! TOML scenario documents.
//!
//! Key names follow the [`ScenarioConfig`] fields. Angles are written in
//! degrees and angular rates in deg/s; controller gains stay in rad per unit
//! pixel error and `filter.r_diag` stays in m^2 / rad^2.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::filters::NoiseConfig;
use crate::frames::EulerAngles;
use crate::geoloc::{CameraFov, UavPose};
use crate::sensing::{GimbalController, SensorNoise};
use crate::simworld::{
    Disturbance, FilterConfig, Position3, ScenarioConfig, ScenarioError, SearchConfig, UsvConfig,
    UsvPlan, VelocitySegment,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnglesDeg {
    #[serde(default)]
    pub roll: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavDoc {
    pub position: [f64; 3],
    pub attitude: AnglesDeg,
    pub gimbal: AnglesDeg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FovDoc {
    pub horizontal: f64,
    pub vertical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseDoc {
    pub pixel_sigma: f64,
    pub range_sigma: f64,
    pub miss_probability: f64,
    pub confidence_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDoc {
    pub gain_azimuth: f64,
    pub gain_elevation: f64,
    pub pitch_limits: [f64; 2],
    pub yaw_limits: [f64; 2],
    #[serde(default)]
    pub deadband: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentDoc {
    pub start: f64,
    pub surge: f64,
    #[serde(default)]
    pub sway: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanDoc {
    Stationary,
    Waypoints {
        waypoints: Vec<[f64; 2]>,
        surge: f64,
        max_turn_rate: f64,
        acceptance_radius: f64,
    },
    Velocity {
        segments: Vec<SegmentDoc>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsvDoc {
    pub initial_position: [f64; 2],
    pub initial_yaw: f64,
    pub plan: PlanDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceDoc {
    pub amplitude: f64,
    pub period: f64,
    pub heading: f64,
    #[serde(default)]
    pub jitter_sigma: f64,
}

impl Default for DisturbanceDoc {
    fn default() -> Self {
        Self {
            amplitude: 0.0,
            period: 1.0,
            heading: 0.0,
            jitter_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterDoc {
    pub r_diag: [f64; 4],
    pub sigma_a: f64,
    pub min_confidence: f64,
}

impl Default for FilterDoc {
    fn default() -> Self {
        let d = FilterConfig::default();
        let r = d.noise.r_diag();
        Self {
            r_diag: [r[0], r[1], r[2], r[3]],
            sigma_a: d.noise.sigma_a(),
            min_confidence: d.min_confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchDoc {
    pub yaw_step: f64,
}

/// A complete scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub duration: f64,
    pub dt: f64,
    pub measurement_period: f64,
    pub seed: u64,
    #[serde(default)]
    pub water_height: f64,
    pub uav: UavDoc,
    pub fov: FovDoc,
    pub noise: NoiseDoc,
    pub controller: ControllerDoc,
    pub usv: UsvDoc,
    #[serde(default)]
    pub disturbance: DisturbanceDoc,
    #[serde(default)]
    pub filter: FilterDoc,
    pub search: Option<SearchDoc>,
}

/// The subset `replay` needs when no full scenario is at hand.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayDocument {
    pub fov: FovDoc,
    #[serde(default)]
    pub filter: FilterDoc,
}

fn err(key: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::new(key, message)
}

fn angle(key: &str, deg: f64) -> Result<f64, ScenarioError> {
    if !deg.is_finite() || !(-180.0..=180.0).contains(&deg) {
        return Err(err(
            key,
            format!("must be within [-180, 180] degrees, got {deg}"),
        ));
    }
    Ok(deg.to_radians())
}

fn euler(key: &str, a: &AnglesDeg) -> Result<EulerAngles<f64>, ScenarioError> {
    let roll = angle(&format!("{key}.roll"), a.roll)?;
    let pitch = angle(&format!("{key}.pitch"), a.pitch)?;
    let yaw = angle(&format!("{key}.yaw"), a.yaw)?;
    EulerAngles::new(roll, pitch, yaw).map_err(|e| err(key, e.to_string()))
}

impl FovDoc {
    pub fn to_fov(&self) -> Result<CameraFov<f64>, ScenarioError> {
        for (key, v) in [
            ("fov.horizontal", self.horizontal),
            ("fov.vertical", self.vertical),
        ] {
            if !(v.is_finite() && v > 0.0 && v < 180.0) {
                return Err(err(
                    key,
                    format!("must be within (0, 180) degrees, got {v}"),
                ));
            }
        }
        CameraFov::new(self.horizontal.to_radians(), self.vertical.to_radians())
            .map_err(|e| err("fov", e.to_string()))
    }

    fn from_fov(fov: &CameraFov<f64>) -> Self {
        Self {
            horizontal: fov.horizontal().to_degrees(),
            vertical: fov.vertical().to_degrees(),
        }
    }
}

impl FilterDoc {
    pub fn to_filter(&self) -> Result<FilterConfig, ScenarioError> {
        let noise = NoiseConfig::new(Vector4::from(self.r_diag), self.sigma_a)
            .map_err(|e| err("filter", e.to_string()))?;
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(err("filter.min_confidence", "must be in [0, 1]"));
        }
        Ok(FilterConfig {
            noise,
            min_confidence: self.min_confidence,
        })
    }
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| err(&toml_key(&e), toml_message(&e)))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario documents always serialize")
    }

    /// Converts to radians and builds a validated scenario.
    pub fn to_config(&self) -> Result<ScenarioConfig, ScenarioError> {
        let uav = UavPose::new(
            Position3::from(self.uav.position),
            euler("uav.attitude", &self.uav.attitude)?,
            euler("uav.gimbal", &self.uav.gimbal)?,
        )
        .map_err(|e| err("uav.position", e.to_string()))?;

        let n = &self.noise;
        let noise = SensorNoise::new(
            n.pixel_sigma,
            n.range_sigma,
            n.miss_probability,
            n.confidence_floor,
        )
        .map_err(|e| err("noise", e.to_string()))?;

        let c = &self.controller;
        let pitch_limits = (
            angle("controller.pitch_limits", c.pitch_limits[0])?,
            angle("controller.pitch_limits", c.pitch_limits[1])?,
        );
        let yaw_limits = (
            angle("controller.yaw_limits", c.yaw_limits[0])?,
            angle("controller.yaw_limits", c.yaw_limits[1])?,
        );
        let controller = GimbalController::new(
            c.gain_azimuth,
            c.gain_elevation,
            pitch_limits,
            yaw_limits,
            c.deadband,
        )
        .map_err(|e| err("controller", e.to_string()))?;

        let plan = match &self.usv.plan {
            PlanDoc::Stationary => UsvPlan::Stationary,
            PlanDoc::Waypoints {
                waypoints,
                surge,
                max_turn_rate,
                acceptance_radius,
            } => UsvPlan::Waypoints {
                waypoints: waypoints.clone(),
                surge: *surge,
                max_turn_rate: max_turn_rate.to_radians(),
                acceptance_radius: *acceptance_radius,
            },
            PlanDoc::Velocity { segments } => UsvPlan::Velocity {
                segments: segments
                    .iter()
                    .map(|s| {
                        Ok(VelocitySegment {
                            start: s.start,
                            surge: s.surge,
                            sway: s.sway,
                            yaw: angle("usv.plan.segments.yaw", s.yaw)?,
                        })
                    })
                    .collect::<Result<_, ScenarioError>>()?,
            },
        };

        let d = &self.disturbance;
        let cfg = ScenarioConfig {
            duration: self.duration,
            dt: self.dt,
            measurement_period: self.measurement_period,
            seed: self.seed,
            water_height: self.water_height,
            uav,
            fov: self.fov.to_fov()?,
            noise,
            controller,
            usv: UsvConfig {
                initial_position: self.usv.initial_position,
                initial_yaw: angle("usv.initial_yaw", self.usv.initial_yaw)?,
                plan,
            },
            disturbance: Disturbance {
                amplitude: d.amplitude,
                period: d.period,
                heading: angle("disturbance.heading", d.heading)?,
                jitter_sigma: d.jitter_sigma,
            },
            filter: self.filter.to_filter()?,
            search: match &self.search {
                Some(s) => Some(SearchConfig {
                    yaw_step: angle("search.yaw_step", s.yaw_step)?,
                }),
                None => None,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Inverse of [`to_config`](Self::to_config), up to degree rounding.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let deg = |e: &EulerAngles<f64>| {
            let [roll, pitch, yaw] = e.to_degrees();
            AnglesDeg { roll, pitch, yaw }
        };
        let p = cfg.uav.position();
        let c = &cfg.controller;
        let (p_lo, p_hi) = c.pitch_limits();
        let (y_lo, y_hi) = c.yaw_limits();
        let r = cfg.filter.noise.r_diag();
        Self {
            duration: cfg.duration,
            dt: cfg.dt,
            measurement_period: cfg.measurement_period,
            seed: cfg.seed,
            water_height: cfg.water_height,
            uav: UavDoc {
                position: [p.x, p.y, p.z],
                attitude: deg(&cfg.uav.attitude),
                gimbal: deg(&cfg.uav.gimbal),
            },
            fov: FovDoc::from_fov(&cfg.fov),
            noise: NoiseDoc {
                pixel_sigma: cfg.noise.pixel_sigma,
                range_sigma: cfg.noise.range_sigma,
                miss_probability: cfg.noise.miss_probability,
                confidence_floor: cfg.noise.confidence_floor,
            },
            controller: ControllerDoc {
                gain_azimuth: c.gain_azimuth(),
                gain_elevation: c.gain_elevation(),
                pitch_limits: [p_lo.to_degrees(), p_hi.to_degrees()],
                yaw_limits: [y_lo.to_degrees(), y_hi.to_degrees()],
                deadband: c.deadband(),
            },
            usv: UsvDoc {
                initial_position: cfg.usv.initial_position,
                initial_yaw: cfg.usv.initial_yaw.to_degrees(),
                plan: match &cfg.usv.plan {
                    UsvPlan::Stationary => PlanDoc::Stationary,
                    UsvPlan::Waypoints {
                        waypoints,
                        surge,
                        max_turn_rate,
                        acceptance_radius,
                    } => PlanDoc::Waypoints {
                        waypoints: waypoints.clone(),
                        surge: *surge,
                        max_turn_rate: max_turn_rate.to_degrees(),
                        acceptance_radius: *acceptance_radius,
                    },
                    UsvPlan::Velocity { segments } => PlanDoc::Velocity {
                        segments: segments
                            .iter()
                            .map(|s| SegmentDoc {
                                start: s.start,
                                surge: s.surge,
                                sway: s.sway,
                                yaw: s.yaw.to_degrees(),
                            })
                            .collect(),
                    },
                },
            },
            disturbance: DisturbanceDoc {
                amplitude: cfg.disturbance.amplitude,
                period: cfg.disturbance.period,
                heading: cfg.disturbance.heading.to_degrees(),
                jitter_sigma: cfg.disturbance.jitter_sigma,
            },
            filter: FilterDoc {
                r_diag: [r[0], r[1], r[2], r[3]],
                sigma_a: cfg.filter.noise.sigma_a(),
                min_confidence: cfg.filter.min_confidence,
            },
            search: cfg.search.map(|s| SearchDoc {
                yaw_step: s.yaw_step.to_degrees(),
            }),
        }
    }
}

impl ReplayDocument {
    /// Accepts either a full scenario file or one holding only `[fov]` and
    /// `[filter]`.
    pub fn parse(text: &str) -> Result<(CameraFov<f64>, FilterConfig), ScenarioError> {
        if let Ok(doc) = toml::from_str::<ConfigDocument>(text) {
            let cfg = doc.to_config()?;
            return Ok((cfg.fov, cfg.filter));
        }
        let doc: ReplayDocument =
            toml::from_str(text).map_err(|e| err(&toml_key(&e), toml_message(&e)))?;
        Ok((doc.fov.to_fov()?, doc.filter.to_filter()?))
    }
}

/// Best-effort key for a TOML error: the quoted field name if serde gave
/// one, otherwise the line/column.
fn toml_key(e: &toml::de::Error) -> String {
    let msg = e.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    match e.span() {
        Some(span) => format!("byte {}", span.start),
        None => "document".to_string(),
    }
}

fn toml_message(e: &toml::de::Error) -> String {
    e.message().trim().replace('\n', " ")
}
