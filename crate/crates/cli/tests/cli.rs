//! Exit-code contract and file-format behavior of the `gengrad` binary.

use std::path::Path;
use std::process::Command;

fn run(args: &[&str], dir: &Path) -> (Option<i32>, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_gengrad"))
        .args(args)
        .current_dir(dir)
        .env_remove("GENGRAD_THREADS")
        .output()
        .unwrap();
    (
        out.status.code(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn gradcheck_affine_fixture_passes_tightly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"fixture":"affine-1-1","seed":3,"theta_count":5}"#);
    let (code, stdout, _) = run(&["gradcheck", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(0), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/gradcheck_report.json")).unwrap())
            .unwrap();
    assert!(report["pass"].as_bool().unwrap());
    // the affine model is quadratic in theta, so central differences are
    // exact up to rounding
    assert!(report["max_discrepancy"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn gradcheck_flags_wrong_sign_kink_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fixture":"relu-1-2-1","seed":3,"theta_count":2,
            "activation":{"kind":"relu","kink_values":{"0":-0.5}}}"#,
    );
    let (code, _, _) = run(&["gradcheck", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(1));
}

#[test]
fn missing_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"widths":[1,1],"dataset":"does_not_exist.json","seed":1}"#,
    );
    let (code, _, stderr) = run(&["gradcheck", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(2), "{stderr}");
}

#[test]
fn converge_truncated_schedule_fails_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // schedule capped far below the stabilization index of a generic theta
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fixture":"relu-2-3-2","seed":4,"theta_count":3,"n_schedule":[1,2]}"#,
    );
    let (code, stdout, _) = run(&["converge", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(1), "{stdout}");
}

#[test]
fn converge_empty_kink_set_stabilizes_at_one() {
    let dir = tempfile::tempdir().unwrap();
    // hard_tanh far from its kinks behaves like an empty kink set; instead
    // use the schedule [1] with the affine fixture, where no activation is
    // ever applied
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fixture":"affine-1-1","seed":4,"theta_count":2,"n_schedule":[1]}"#,
    );
    let (code, _, _) = run(&["converge", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/converge_report.json")).unwrap())
            .unwrap();
    for entry in report["per_theta"].as_array().unwrap() {
        assert_eq!(entry["stabilization_index"].as_u64(), Some(1));
    }
}

#[test]
fn subgrad_rejects_zero_directions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fixture":"relu-1-1-1-pinned","seed":3,"n_dirs":0}"#,
    );
    let (code, _, _) = run(&["subgrad", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(2));
}

#[test]
fn subgrad_affine_fixture_serializes_infinite_gap_as_null() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"fixture":"affine-1-1","seed":7}"#);
    let (code, _, _) = run(&["subgrad", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(0));
    // no hidden layers: the kink gap is infinite and must round-trip as null
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/subgrad_witness.json")).unwrap())
            .unwrap();
    assert!(report["witness"]["steps"][0]["kink_gap"].is_null());
    assert!(report["pass"].as_bool().unwrap());
}

#[test]
fn subgrad_smooth_fixture_degenerates_but_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fixture":"relu-1-2-1","seed":3,"theta":{"kind":"random","scale":1.0}}"#,
    );
    let (code, stdout, _) = run(&["subgrad", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(0), "{stdout}");
}

#[test]
fn mollifier_row_count_and_kink_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"activation":{"kind":"relu"},"grid":{"lo":-1.0,"hi":1.0,"step":0.001},"n_list":[1,4,16]}"#,
    );
    let (code, _, _) = run(&["mollifier", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(0));
    let csv = std::fs::read_to_string(dir.path().join("out/mollifier.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,n,value,derivative");
    assert_eq!(lines.len() - 1, 3 * 2001);
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        let x: f64 = cells[0].parse().unwrap();
        let value: f64 = cells[2].parse().unwrap();
        let deriv: f64 = cells[3].parse().unwrap();
        if x == 1.0 {
            assert_eq!(value, 1.0); // outside every kink neighborhood
        }
        if x == 0.0 {
            assert_eq!(value, 0.0); // linearization through the kink
            assert_eq!(deriv, 0.0); // prescribed kink derivative
        }
    }
}

#[test]
fn lipschitz_reports_bound_for_affine_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"fixture":"affine-1-1","seed":9,"n_pairs":2000}"#);
    let (code, _, _) = run(&["lipschitz", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/lipschitz_report.json")).unwrap())
            .unwrap();
    let bound = report["affine_bound"].as_f64().unwrap();
    for c in report["constants"].as_array().unwrap() {
        assert!(c.as_f64().unwrap() <= bound);
    }
}

#[test]
fn csv_summary_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"activation":{"kind":"relu"},"grid":{"lo":0.0,"hi":1.0,"step":0.5},"n_list":[1]}"#,
    );
    let (code, stdout, _) = run(
        &["mollifier", "--config", &cfg, "--out", "out", "--format", "csv"],
        dir.path(),
    );
    assert_eq!(code, Some(0));
    assert!(stdout.starts_with("mollifier,true,rows,"), "{stdout}");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"fixture":"affine-1-1","seed":1,"n_pairs":200}"#);
    let (code, _, _) = run(
        &["lipschitz", "--config", &cfg, "--out", "a", "--seed", "77"],
        dir.path(),
    );
    assert_eq!(code, Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/lipschitz_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["seeds"][0].as_u64(), Some(77));
}

#[test]
fn theta_loads_from_little_endian_binary() {
    let dir = tempfile::tempdir().unwrap();
    // theta = (1, 0) as raw little-endian f64s
    let mut bytes = Vec::new();
    for v in [1.0f64, 0.0] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(dir.path().join("theta.bin"), &bytes).unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fixture":"affine-1-1","seed":2,"n_pairs":200,
            "theta":{"kind":"file","path":"theta.bin"}}"#,
    );
    let (code, _, stderr) = run(&["lipschitz", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code, Some(0), "{stderr}");
}

#[test]
fn invalid_threads_env_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"fixture":"affine-1-1"}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_gengrad"))
        .args(["lipschitz", "--config", &cfg, "--out", "out"])
        .current_dir(dir.path())
        .env("GENGRAD_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
