//! CSV formats: simulation trace, comparison metrics, measurement log and
//! replay output.

use std::io::{Read, Write};

use log::warn;
use thiserror::Error;

use crate::filters::{
    ekf_step, measurement_from_detection, EkfState, FilterContext, MeasurementGate,
};
use crate::frames::EulerAngles;
use crate::geoloc::{CameraFov, UavPose};
use crate::sensing::Detection;
use crate::simworld::{FilterConfig, MetricsReport, Position3, ScenarioConfig, TraceRecord};

pub const TRACE_HEADER: [&str; 22] = [
    "time_s",
    "true_x",
    "true_y",
    "true_z",
    "ekf_x",
    "ekf_y",
    "ekf_z",
    "mean_x",
    "mean_y",
    "mean_z",
    "raw_x",
    "raw_y",
    "raw_z",
    "meas_r",
    "meas_alpha_rad",
    "meas_eps_rad",
    "meas_h",
    "gimbal_pitch_deg",
    "gimbal_yaw_deg",
    "err2d_ekf",
    "err2d_mean",
    "err2d_raw",
];

pub const METRICS_HEADER: [&str; 5] = ["strategy", "time_s", "err_x", "err_y", "err_2d"];

pub const LOG_HEADER: [&str; 14] = [
    "time_s",
    "u",
    "v",
    "confidence",
    "range_m",
    "uav_x",
    "uav_y",
    "uav_z",
    "uav_roll_deg",
    "uav_pitch_deg",
    "uav_yaw_deg",
    "gimbal_roll_deg",
    "gimbal_pitch_deg",
    "gimbal_yaw_deg",
];

pub const REPLAY_HEADER: [&str; 7] = ["time_s", "ekf_x", "ekf_y", "ekf_z", "p_xx", "p_yy", "p_zz"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// A malformed measurement log, tagged with the 1-based line number.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct LogError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ReadLogError {
    #[error(transparent)]
    Format(#[from] LogError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn vec3(v: Option<Position3>) -> [String; 3] {
    match v {
        Some(v) => [num(v.x), num(v.y), num(v.z)],
        None => Default::default(),
    }
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceRecord]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        let mut row = Vec::with_capacity(TRACE_HEADER.len());
        row.push(num(r.time));
        row.extend(vec3(Some(r.usv_true)));
        row.extend(vec3(r.ekf_estimate));
        row.extend(vec3(r.mean_estimate));
        row.extend(vec3(r.raw_estimate));
        match &r.measurement {
            Some(z) => row.extend([z.range(), z.azimuth(), z.elevation(), z.height()].map(num)),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        row.push(num(r.gimbal.pitch().to_degrees()));
        row.push(num(r.gimbal.yaw().to_degrees()));
        row.extend([r.error_2d_ekf, r.error_2d_mean, r.error_2d_raw].map(opt));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-checkpoint rows followed by `mean` and `max` rows per strategy.
pub fn write_metrics<W: Write>(out: W, report: &MetricsReport) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for c in &report.checkpoints {
        let [x, y, d] = match c.error {
            Some(e) => e.map(num),
            None => Default::default(),
        };
        w.write_record([c.strategy.name().to_string(), num(c.checkpoint), x, y, d])?;
    }
    for s in &report.summaries {
        for (label, value) in [("mean", s.mean_2d), ("max", s.max_2d)] {
            w.write_record([s.strategy.name(), label, "", "", &opt(value)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One detector/datalink sample with the pose it was taken from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub detection: Detection<f64>,
    pub range: f64,
    pub pose: UavPose<f64>,
}

/// Extracts every detection of a trace as a measurement log.
pub fn log_from_trace(cfg: &ScenarioConfig, trace: &[TraceRecord]) -> Vec<LogEntry> {
    trace
        .iter()
        .filter_map(|r| {
            r.detection.map(|(detection, range)| LogEntry {
                detection,
                range,
                pose: cfg.uav.with_gimbal(r.gimbal),
            })
        })
        .collect()
}

pub fn write_log<W: Write>(out: W, entries: &[LogEntry]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOG_HEADER)?;
    for e in entries {
        let d = &e.detection;
        let p = e.pose.position();
        let mut row = vec![
            d.time(),
            d.u(),
            d.v(),
            d.confidence(),
            e.range,
            p.x,
            p.y,
            p.z,
        ];
        row.extend(e.pose.attitude.to_degrees());
        row.extend(e.pose.gimbal.to_degrees());
        w.write_record(row.into_iter().map(num))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log<R: Read>(input: R) -> Result<Vec<LogEntry>, ReadLogError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut records = rdr.records();
    let fail = |line: u64, message: String| ReadLogError::Format(LogError { line, message });
    let csv_fail = |e: csv::Error| -> ReadLogError {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        if let csv::ErrorKind::Io(_) = e.kind() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => ReadLogError::Io(io),
                _ => unreachable!(),
            }
        } else {
            ReadLogError::Format(LogError {
                line,
                message: e.to_string(),
            })
        }
    };

    let header = match records.next() {
        Some(h) => h.map_err(csv_fail)?,
        None => return Err(fail(1, "missing header row".into())),
    };
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != LOG_HEADER {
        return Err(fail(
            1,
            format!("header must be `{}`", LOG_HEADER.join(",")),
        ));
    }

    let mut entries: Vec<LogEntry> = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_fail)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != LOG_HEADER.len() {
            return Err(fail(
                line,
                format!("expected {} fields, found {}", LOG_HEADER.len(), rec.len()),
            ));
        }
        let mut v = [0.0; 14];
        for (i, field) in rec.iter().enumerate() {
            v[i] = field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| {
                    fail(
                        line,
                        format!("{}: not a finite number: {field:?}", LOG_HEADER[i]),
                    )
                })?;
        }
        let [t, u, vv, conf, range, x, y, z, ar, ap, ay, gr, gp, gy] = v;
        if let Some(prev) = entries.last() {
            if t <= prev.detection.time() {
                return Err(fail(
                    line,
                    format!(
                        "time_s must increase strictly ({t} after {})",
                        prev.detection.time()
                    ),
                ));
            }
        }
        let detection = Detection::new(u, vv, conf, t).map_err(|e| fail(line, e.to_string()))?;
        let attitude =
            EulerAngles::from_degrees(ar, ap, ay).map_err(|e| fail(line, e.to_string()))?;
        let gimbal =
            EulerAngles::from_degrees(gr, gp, gy).map_err(|e| fail(line, e.to_string()))?;
        let pose = UavPose::new(Position3::new(x, y, z), attitude, gimbal)
            .map_err(|e| fail(line, e.to_string()))?;
        entries.push(LogEntry {
            detection,
            range,
            pose,
        });
    }
    Ok(entries)
}

/// EKF output after each logged sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayRow {
    pub time: f64,
    pub state: EkfState<f64>,
}

/// Runs the EKF over a measurement log. Gated or rejected samples repeat
/// the held state; samples before the first accepted one produce no row.
pub fn replay(entries: &[LogEntry], fov: &CameraFov<f64>, filter: &FilterConfig) -> Vec<ReplayRow> {
    let gate = MeasurementGate::new(filter.min_confidence);
    let mut state: Option<EkfState<f64>> = None;
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let t = e.detection.time();
        if gate.admits(&e.detection, e.range) {
            match measurement_from_detection(&e.detection, e.range, fov, &e.pose) {
                Ok(z) => match ekf_step(
                    state.as_ref(),
                    &z,
                    fov,
                    &FilterContext::new(e.pose),
                    &filter.noise,
                ) {
                    Ok(next) => state = Some(next),
                    Err(err) => warn!("t={t}: EKF rejected measurement: {err}"),
                },
                Err(err) => warn!("t={t}: unusable detection: {err}"),
            }
        }
        if let Some(s) = state {
            rows.push(ReplayRow { time: t, state: s });
        }
    }
    rows
}

pub fn write_replay<W: Write>(out: W, rows: &[ReplayRow]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPLAY_HEADER)?;
    for r in rows {
        let x = r.state.x();
        let p = r.state.covariance();
        w.write_record([r.time, x.x, x.y, x.z, p[(0, 0)], p[(1, 1)], p[(2, 2)]].map(num))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::{canonical, run_scenario};

    #[test]
    fn log_round_trips() {
        let cfg = canonical::stationary(2);
        let trace = run_scenario(&cfg).unwrap();
        let entries = log_from_trace(&cfg, &trace);
        let mut buf = Vec::new();
        write_log(&mut buf, &entries).unwrap();
        let back = read_log(buf.as_slice()).unwrap();
        assert_eq!(back.len(), entries.len());
        for (a, b) in back.iter().zip(&entries) {
            assert_eq!(a.detection, b.detection);
            assert_eq!(a.range, b.range);
            assert!((a.pose.gimbal.pitch() - b.pose.gimbal.pitch()).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_header_is_rejected() {
        let e = read_log("0,0,0,1,100,0,0,7.5,0,0,0,0,0,0\n".as_bytes()).unwrap_err();
        assert!(matches!(e, ReadLogError::Format(LogError { line: 1, .. })));
    }

    #[test]
    fn non_increasing_time_names_the_line() {
        let text = format!(
            "{}\n1,0,0,1,100,0,0,7.5,0,0,0,0,0,0\n1,0,0,1,100,0,0,7.5,0,0,0,0,0,0\n",
            LOG_HEADER.join(",")
        );
        let e = read_log(text.as_bytes()).unwrap_err();
        assert!(
            matches!(e, ReadLogError::Format(LogError { line: 3, .. })),
            "{e}"
        );
    }

    #[test]
    fn bad_number_names_the_column() {
        let text = format!(
            "{}\n1,0,x,1,100,0,0,7.5,0,0,0,0,0,0\n",
            LOG_HEADER.join(",")
        );
        let e = read_log(text.as_bytes()).unwrap_err().to_string();
        assert!(e.starts_with("line 2: v:"), "{e}");
    }

    #[test]
    fn gated_rows_hold_the_state() {
        let pose = UavPose::hovering(7.5, EulerAngles::zero()).unwrap();
        let fov = CameraFov::from_degrees(60.0, 45.0).unwrap();
        let entry = |t: f64, conf: f64| LogEntry {
            detection: Detection::new(0.0, 0.0, conf, t).unwrap(),
            range: 100.0,
            pose,
        };
        let rows = replay(
            &[entry(0.0, 0.1), entry(1.0, 0.9), entry(2.0, 0.1)],
            &fov,
            &FilterConfig::default(),
        );
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].state, rows[1].state);
        assert_eq!(rows[1].time, 2.0);
    }
}
