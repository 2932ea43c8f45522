use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skylink::cli::ConfigDocument;
use skylink::simworld::canonical;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn skylink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skylink"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_configs_match_builders() {
    for (file, built) in [
        ("stationary.toml", canonical::stationary(1)),
        ("moving.toml", canonical::moving(1)),
    ] {
        let text = std::fs::read_to_string(configs().join(file)).unwrap();
        let parsed = ConfigDocument::parse(&text).unwrap().to_config().unwrap();
        assert_eq!(parsed, built, "{file}");
    }
}

#[test]
fn simulate_writes_trace_with_fixed_header() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("trace.csv");
    let cfg = configs().join("stationary.toml");
    let o = skylink(&[
        "simulate",
        "--config",
        path_str(&cfg),
        "--output",
        path_str(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "time_s,true_x,true_y,true_z,ekf_x,ekf_y,ekf_z,mean_x,mean_y,mean_z,raw_x,raw_y,raw_z,\
         meas_r,meas_alpha_rad,meas_eps_rad,meas_h,gimbal_pitch_deg,gimbal_yaw_deg,err2d_ekf,err2d_mean,err2d_raw"
    );
    assert_eq!(lines.count(), 2001);
}

#[test]
fn seed_flag_changes_output() {
    let cfg = configs().join("stationary.toml");
    let a = skylink(&["simulate", "--config", path_str(&cfg), "--seed", "5"]);
    let b = skylink(&["simulate", "--config", path_str(&cfg), "--seed", "6"]);
    assert_eq!(a.status.code(), Some(0));
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn compare_reports_every_strategy() {
    let cfg = configs().join("moving.toml");
    let o = skylink(&[
        "compare",
        "--config",
        path_str(&cfg),
        "--checkpoints",
        "10,50",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("strategy,time_s,err_x,err_y,err_2d\n"));
    for name in ["ekf", "mean_filter", "no_filter"] {
        assert_eq!(
            text.lines()
                .filter(|l| l.starts_with(&format!("{name},")))
                .count(),
            4
        );
    }
}

#[test]
fn checkpoint_past_duration_exits_2() {
    let cfg = configs().join("stationary.toml");
    let o = skylink(&[
        "compare",
        "--config",
        path_str(&cfg),
        "--checkpoints",
        "500",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("checkpoints"));
}

#[test]
fn bad_config_exits_2_naming_the_key() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(configs().join("stationary.toml"))
        .unwrap()
        .replace("horizontal = 5.0", "horizontal = 200.0");
    std::fs::write(&bad, text).unwrap();
    let o = skylink(&["validate", "--config", path_str(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr)
        .unwrap()
        .contains("fov.horizontal"));
}

#[test]
fn missing_file_exits_3() {
    let o = skylink(&["validate", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unwritable_output_exits_3() {
    let cfg = configs().join("stationary.toml");
    let o = skylink(&[
        "simulate",
        "--config",
        path_str(&cfg),
        "--output",
        "/nonexistent/dir/t.csv",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_log_exits_2_naming_the_line() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("log.csv");
    std::fs::write(&log, "time_s,u\n0,0\n").unwrap();
    let cfg = configs().join("stationary.toml");
    let o = skylink(&[
        "replay",
        "--log",
        path_str(&log),
        "--config",
        path_str(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("line 1"));
}

#[test]
fn replay_round_trip_through_files() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("log.csv");
    let cfg = configs().join("moving.toml");
    let sim = skylink(&[
        "simulate",
        "--config",
        path_str(&cfg),
        "--log",
        path_str(&log),
    ]);
    assert_eq!(sim.status.code(), Some(0));

    let o = skylink(&[
        "replay",
        "--log",
        path_str(&log),
        "--config",
        path_str(&cfg),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("time_s,ekf_x,ekf_y,ekf_z,p_xx,p_yy,p_zz\n"));
    assert!(text.lines().count() > 100);
}
