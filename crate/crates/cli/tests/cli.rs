use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_confocal");

const SMALL: &str = r#"
[aperture]
half_angle_degrees = 60.0

[grid]
extent_x_wavelengths = 1.5
extent_y_wavelengths = 1.5
extent_z_wavelengths = 3.0
step_x_wavelengths = 0.125
step_y_wavelengths = 0.125
step_z_wavelengths = 0.125

[geometry]
kind = "point_array"
detector_count = 5
detector_pitch_wavelengths = 0.25

[optimize]
thresholds_db = [20.0]
"#;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().expect("spawn confocal")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn field_is_cached_by_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let first = run(&["field", "--config", &cfg, "--out", "out"], tmp.path());
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(!stderr(&first).contains("cache hit"));

    let cache: Vec<_> = std::fs::read_dir(tmp.path().join("out/cache")).unwrap().collect();
    assert_eq!(cache.len(), 1);
    let dump = std::fs::read(cache[0].as_ref().unwrap().path()).unwrap();
    assert!(dump.starts_with(b"confocal-field v1\nextent_x=1.5\nextent_y=1.5\nextent_z=3.0\n"));

    let second = run(&["field", "--config", &cfg, "--out", "out"], tmp.path());
    assert!(second.status.success());
    assert!(stderr(&second).contains("cache hit"));

    let uncached = run(&["field", "--config", &cfg, "--out", "out", "--no-cache"], tmp.path());
    assert!(uncached.status.success());
    assert!(!stderr(&uncached).contains("cache hit"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.toml", "[aperture]\nhalf_angle_degrees = 0.0\n");
    let o = run(&["field", "--config", &bad], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("half_angle_degrees"), "{}", stderr(&o));

    let unknown = write_config(tmp.path(), "unknown.toml", "[grid]\nextent_x = 3.0\n");
    let o = run(&["field", "--config", &unknown], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("extent_x"));

    let o = run(&["reproduce", "14"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("valid ids: 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13"));

    let o = run(&["field", "--threads", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    // Too small to contain the first null of the mainlobe.
    let cfg = write_config(
        tmp.path(),
        "tiny.toml",
        &SMALL
            .replace("extent_x_wavelengths = 1.5", "extent_x_wavelengths = 0.25")
            .replace("extent_y_wavelengths = 1.5", "extent_y_wavelengths = 0.25")
            .replace("extent_z_wavelengths = 3.0", "extent_z_wavelengths = 0.5")
            .replace("detector_count = 5", "detector_count = 1"),
    );
    let o = run(&["optimize", "--config", &cfg, "--out", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn optimize_emits_one_result_per_policy_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let o = run(&["optimize", "--config", &cfg, "--out", "out"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("out");
    for label in ["none", "20dB"] {
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(format!("result_{label}.json"))).unwrap())
                .unwrap();
        assert!(json["improvement_factor"].as_f64().unwrap() > 0.0);
        assert_eq!(read_csv(&out.join(format!("coefficients_{label}.csv"))).len(), 5);
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "truncation_sweep.csv"));
    for f in files {
        use sha2::Digest;
        let bytes = std::fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(sha2::Sha256::digest(&bytes)));
    }
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    for out in ["a", "b"] {
        let o = run(&["analyze", "--config", &cfg, "--out", out, "--no-cache"], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(tmp.path().join("a/manifest.json")).unwrap();
    let b = std::fs::read(tmp.path().join("b/manifest.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn default_point_scan_coefficients_are_center_dominated() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["reproduce", "3", "--out", "out"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let grid = read_csv(&tmp.path().join("out/coefficients_20dB.csv"));
    assert_eq!(grid.len(), 13);
    assert!(grid.iter().all(|row| row.len() == 13));
    let values: Vec<Vec<f64>> = grid.iter().map(|r| r.iter().map(|c| c.parse().unwrap()).collect()).collect();
    let center = values[6][6].abs();
    assert!(values.iter().flatten().all(|v| v.abs() <= center));
}

#[test]
fn line_scan_subtracts_off_center_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["reproduce", "9", "--out", "out"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&tmp.path().join("out/coefficients_20dB.csv"));
    assert_eq!(rows[0], ["illumination_x_wavelengths", "detector_x_wavelengths", "coefficient"]);
    let coeffs: Vec<(f64, f64)> =
        rows[1..].iter().map(|r| (r[1].parse().unwrap(), r[2].parse().unwrap())).collect();
    assert_eq!(coeffs.len(), 25);
    let center = coeffs.iter().find(|(x, _)| *x == 0.0).unwrap().1;
    assert!(center > 0.0);
    // Mirror-symmetric weights with negative lobes off center.
    for &(x, c) in &coeffs {
        let mirror = coeffs.iter().find(|(y, _)| *y == -x).unwrap().1;
        assert!((c - mirror).abs() < 1e-6);
    }
    assert!(coeffs.iter().any(|&(x, c)| x != 0.0 && c < 0.0));
}

#[test]
fn power_vs_shift_reproduction_matches_the_frozen_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["reproduce", "2", "--out", "out"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let emitted = std::fs::read(tmp.path().join("out/power_vs_shift.csv")).unwrap();
    let golden = std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/power_vs_shift.csv"))
        .unwrap();
    assert_eq!(emitted, golden);
}

#[test]
fn cross_shift_sweep_lists_every_level() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["reproduce", "10", "--out", "out"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&tmp.path().join("out/truncation_sweep.csv"));
    let labels: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels, ["none", "60dB", "50dB", "40dB", "30dB", "20dB", "10dB"]);
}
