use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use finger_dyn::commands::{cmd_compare, cmd_simulate, Options};
use finger_dyn::{parse_config, CliError};
use finger_dyn_core::calibration::Reference;
use finger_dyn_core::sim::CSV_HEADER;
use tempfile::TempDir;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn finger_dyn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finger-dyn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

/// Copies an example config into `dir` with a JSON edit applied.
fn edited(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(example(name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn every_shipped_config_parses() {
    for name in [
        "default.json",
        "quasi_static.json",
        "high_speed.json",
        "zero_dynamics.json",
        "muscle_table.json",
        "calibrate.json",
    ] {
        parse_config(&example(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn shipped_default_echoes_tendon_offset() {
    let cfg = parse_config(&example("default.json")).unwrap();
    assert_eq!(cfg.params.e, 0.0045);
    let dir = TempDir::new().unwrap();
    let opts = Options {
        out: Some(dir.path().join("t.csv")),
        ..Default::default()
    };
    let mut out = Vec::new();
    cmd_simulate(&cfg, &opts, &mut out).unwrap();
    assert!(String::from_utf8(out).unwrap().contains("tendon offset e: 4.5 mm"));
}

#[test]
fn simulate_writes_schema_and_monotone_time() {
    let dir = TempDir::new().unwrap();
    let cfg = example("default.json");
    let o = finger_dyn(
        dir.path(),
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", "run.csv"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("final q (rad)"));
    assert!(text.contains("final q (deg)"));
    assert!(text.contains("peak |qdot|"));
    assert!(text.contains("energy drift"));

    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, CSV_HEADER);
    assert_eq!(header, "t,q1,q2,q3,qd1,qd2,qd3,qdd1,qdd2,qdd3,tau1,tau2,tau3,K,P,E");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2001);
    assert!(rows.iter().all(|r| r.len() == 16));
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
    assert!(csv.contains("# variant: full"));
}

#[test]
fn csv_values_round_trip_losslessly() {
    let dir = TempDir::new().unwrap();
    let cfg = example("high_speed.json");
    let o = finger_dyn(
        dir.path(),
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", "run.csv"],
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    for line in csv.lines().filter(|l| !l.starts_with('#')).skip(1).take(50) {
        for field in line.split(',') {
            let v: f64 = field.parse().unwrap();
            assert_eq!(format!("{v:.16e}"), field);
        }
    }
}

#[test]
fn reduced_variant_is_recorded_and_differs() {
    let dir = TempDir::new().unwrap();
    let cfg = example("default.json");
    let cfg = cfg.to_str().unwrap();
    let full = finger_dyn(dir.path(), &["simulate", "--config", cfg, "--out", "full.csv"]);
    let reduced = finger_dyn(
        dir.path(),
        &[
            "simulate",
            "--config",
            cfg,
            "--out",
            "reduced.csv",
            "--variant",
            "reduced",
        ],
    );
    assert_eq!(full.status.code(), Some(0));
    assert_eq!(reduced.status.code(), Some(0));
    let a = fs::read_to_string(dir.path().join("full.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("reduced.csv")).unwrap();
    assert!(b.contains("# variant: reduced"));
    let (ra, rb) = (data_rows(&a), data_rows(&b));
    let max_dq = ra
        .iter()
        .zip(&rb)
        .flat_map(|(x, y)| (1..4).map(move |j| (x[j] - y[j]).abs()))
        .fold(0.0, f64::max);
    assert!(max_dq > 1e-6, "{max_dq}");
}

#[test]
fn zero_dynamics_keeps_angles_constant() {
    let dir = TempDir::new().unwrap();
    let cfg = example("zero_dynamics.json");
    let o = finger_dyn(
        dir.path(),
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", "z.csv"],
    );
    assert_eq!(o.status.code(), Some(0));
    let rows = data_rows(&fs::read_to_string(dir.path().join("z.csv")).unwrap());
    for r in &rows {
        assert_eq!(&r[1..4], &rows[0][1..4]);
    }
}

#[test]
fn zero_dynamics_compare_is_exactly_zero() {
    let cfg = parse_config(&example("zero_dynamics.json")).unwrap();
    let mut out = Vec::new();
    let r = cmd_compare(&cfg, &Options::default(), &mut out).unwrap();
    assert_eq!(r.max_dq, [0.0; 3]);
    assert_eq!(r.max_dqdot, [0.0; 3]);
    assert_eq!(r.peak_neglected_torque, 0.0);
}

#[test]
fn validate_default_passes_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = example("default.json");
    let cfg = cfg.to_str().unwrap();
    let a = finger_dyn(dir.path(), &["validate", "--config", cfg, "--seed", "7"]);
    let b = finger_dyn(dir.path(), &["validate", "--config", cfg, "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("result: PASS"));
    assert!(!dir.path().join("discrepancy_report.txt").exists());

    let c = finger_dyn(dir.path(), &["validate", "--config", cfg, "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn validate_with_printed_d11_fails_naming_it() {
    let dir = TempDir::new().unwrap();
    let cfg = example("default.json");
    let o = finger_dyn(
        dir.path(),
        &["validate", "--config", cfg.to_str().unwrap(), "--use-paper-d11"],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("inertia_closed_vs_jacobian"));
    let report = fs::read_to_string(dir.path().join("discrepancy_report.txt")).unwrap();
    assert!(report.contains("check.unit.inertia_closed_vs_jacobian: FAIL"));
    assert!(report.contains("check.unit.inertia_closed_vs_jacobian.worst: d_11"));
}

#[test]
fn com_beyond_link_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(dir.path(), "default.json", |v| v["params"]["lc1"] = 0.05.into());
    let o = finger_dyn(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("params.lc1"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error_with_location() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(dir.path(), "default.json", |v| v["sim"]["dt"] = 0.001.into());
    let o = finger_dyn(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("`sim.dt`") && err.contains("unknown field"), "{err}");
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let o = finger_dyn(dir.path(), &["simulate", "--config", "nope.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn integrator_failure_exits_two() {
    let dir = TempDir::new().unwrap();
    // Far too large a step for the distal link.
    let cfg = edited(dir.path(), "high_speed.json", |v| {
        v["sim"]["step"] = 0.01.into();
        v["sim"]["record_every"] = 0.01.into();
        v["sim"]["t_end"] = 5.0.into();
    });
    let o = finger_dyn(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn calibrate_recovers_damping_from_simulated_reference() {
    let dir = TempDir::new().unwrap();
    let cfg = example("calibrate.json");
    let cfg = cfg.to_str().unwrap();
    let sim = finger_dyn(dir.path(), &["simulate", "--config", cfg, "--out", "ref.csv"]);
    assert_eq!(sim.status.code(), Some(0));
    let o = finger_dyn(
        dir.path(),
        &[
            "calibrate",
            "--config",
            cfg,
            "--reference",
            "ref.csv",
            "--out",
            "fit.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let fitted: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    let cd = fitted["params"]["cd"].as_f64().unwrap();
    assert!((cd - 0.02).abs() / 0.02 < 0.01, "{cd}");

    // The fitted file is a usable config fragment.
    let params: finger_dyn_core::FingerParams = serde_json::from_value(fitted["params"].clone()).unwrap();
    params.validate().unwrap();
}

#[test]
fn calibrate_reference_missing_column_exits_one() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.csv"), "t,q1,q3\n0,0,0\n0.01,0,0\n").unwrap();
    let cfg = example("calibrate.json");
    let o = finger_dyn(
        dir.path(),
        &["calibrate", "--config", cfg.to_str().unwrap(), "--reference", "bad.csv"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("q2"), "{}", stderr(&o));
}

#[test]
fn calibrate_unidentifiable_fractions_exit_three() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(dir.path(), "calibrate.json", |v| {
        v["profile"] = serde_json::json!({"kind": "step", "F0": 0.0});
        v["calibration"]["free"] = serde_json::json!(["alpha"]);
        v["calibration"]["bounds"] = serde_json::json!({"alpha": [0.0, 1.0]});
        v["calibration"]["x0"] = serde_json::json!({});
        v["calibration"]["reference"] = "ref.csv".into();
    });
    let cfg = cfg.to_str().unwrap();
    let sim = finger_dyn(dir.path(), &["simulate", "--config", cfg, "--out", "ref.csv"]);
    assert_eq!(sim.status.code(), Some(0));
    let o = finger_dyn(dir.path(), &["calibrate", "--config", cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stdout(&o).contains("flat cost"), "{}", stdout(&o));
}

#[test]
fn calibrate_without_section_is_a_config_error() {
    let cfg = parse_config(&example("default.json")).unwrap();
    let err = finger_dyn::cmd_calibrate(&cfg, &Options::default(), &mut Vec::new()).unwrap_err();
    assert!(matches!(err, CliError::Validation { ref key, .. } if key == "calibration"));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn shipped_reference_matches_shipped_config() {
    let cfg = parse_config(&example("calibrate.json")).unwrap();
    let stored = Reference::from_csv_path(&example("calibrate_reference.csv")).unwrap();
    let traj = finger_dyn_core::sim::simulate(&cfg.sim, &cfg.params, &cfg.profile).unwrap();
    assert_eq!(stored, Reference::from_trajectory(&traj));
}

#[test]
fn table_profile_loads_from_csv() {
    let cfg = parse_config(&example("muscle_table.json")).unwrap();
    match &cfg.profile {
        finger_dyn_core::actuation::ForceProfile::Table(t) => {
            assert_eq!(t.points.len(), 31);
            assert!(t.temperature.is_some());
        }
        other => panic!("{other:?}"),
    }
}
