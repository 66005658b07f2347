use std::process::Command;

fn codimlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_codimlab"))
}

#[test]
fn list_scenarios_prints_presets() {
    let out = codimlab().arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["flat-line", "point", "lipschitz-graph", "rough-graph", "polyline"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn point_measure_passes_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = codimlab()
        .args(["measure", "--preset", "point", "-o"])
        .arg(dir.path())
        .env("CODIMLAB_WORKERS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("[PASS] measure: |ω(Γ) − 1|"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = codimlab()
        .args(["geometry", "--preset", "point", "--set", "scenario.boundary_dim=1", "-o"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("codimension ≥ 2 required"));
    let out = codimlab().args(["geometry"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = codimlab().args(["geometry", "--preset", "point"]).env("CODIMLAB_WORKERS", "many").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resource_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("not-a-dir");
    std::fs::write(&blocker, b"").unwrap();
    let out = codimlab().args(["geometry", "--preset", "point", "-o"]).arg(&blocker).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn incompatible_experiment_exits_two_and_keeps_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = codimlab()
        .args(["verify", "--preset", "point", "--experiment", "bmo-carleson", "--draws", "1", "-o"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("run.json").exists());
}

#[test]
fn config_files_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let text = codimlab::config::preset("point").unwrap().to_toml().unwrap();
    std::fs::write(&cfg, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = codimlab()
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--seed", "3", "--h", "0.0625", "--dump-fields", "--format", "raw", "-o"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let f = codimlab::io::FieldDump::read(&out_dir.join("field_u.bin")).unwrap();
    assert_eq!(f.dims, vec![32, 32]);
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 3);
}
