use std::time::Instant;

use codimlab::config::{preset, ExperimentSpec};
use codimlab::io::{DumpFormat, FieldDump};
use codimlab::pipeline::{run, Stage, StageStatus};

fn out_dir(tag: &str) -> tempfile::TempDir {
    tempfile::Builder::new().prefix(tag).tempdir().unwrap()
}

#[test]
fn minimal_point_run_is_fast_and_stochastic() {
    let dir = out_dir("point");
    let mut cfg = preset("point").unwrap();
    assert_eq!(cfg.grid.lo.len(), 2);
    assert_eq!(((cfg.grid.hi[0] - cfg.grid.lo[0]) / cfg.grid.h).round(), 64.0);
    cfg.output = dir.path().to_path_buf();
    let t = Instant::now();
    let s = run(&cfg, &Stage::ALL, DumpFormat::Text).unwrap();
    assert!(t.elapsed().as_secs_f64() < 10.0);
    let measure = s.stages.iter().find(|r| r.stage == Stage::Measure).unwrap();
    assert!((measure.values["total"] - 1.0).abs() <= 1e-12);
    assert_eq!(s.exit_code(), 0);
    assert!(dir.path().join("run.json").exists());
    assert!(dir.path().join("boundary.csv").exists());
}

#[test]
fn codimension_one_is_rejected() {
    let mut cfg = preset("point").unwrap();
    cfg.scenario.boundary_dim = 1;
    let err = run(&cfg, &[Stage::Geometry], DumpFormat::Text).unwrap_err();
    assert!(err.to_string().contains("codimension ≥ 2 required"));
}

#[test]
fn failing_experiment_keeps_earlier_reports() {
    let dir = out_dir("partial");
    let mut cfg = preset("point").unwrap();
    cfg.output = dir.path().to_path_buf();
    // Needs a boundary line; the point scenario cannot provide one.
    cfg.experiments = vec![ExperimentSpec::BmoCarleson { draws: 2 }];
    let s = run(&cfg, &[Stage::Geometry, Stage::Measure, Stage::Verify], DumpFormat::Text).unwrap();
    let verify = s.stages.iter().find(|r| r.stage == Stage::Verify).unwrap();
    assert!(matches!(verify.status, StageStatus::Error));
    // Experiment and scenario do not fit together: a config-class error.
    assert_eq!(s.exit_code(), 2);
    assert!(dir.path().join("boundary.csv").exists());
    assert!(dir.path().join("measure.csv").exists());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(json["stages"][2]["status"], "error");
}

#[test]
fn raw_dumps_read_back_with_grid_shape() {
    let dir = out_dir("dump");
    let mut cfg = preset("point").unwrap();
    cfg.output = dir.path().to_path_buf();
    cfg.dump_fields = true;
    run(&cfg, &[Stage::Solve, Stage::Measure], DumpFormat::Raw).unwrap();
    for name in ["field_u.bin", "field_green.bin"] {
        let f = FieldDump::read(&dir.path().join(name)).unwrap();
        assert_eq!(f.dims, vec![64, 64]);
        assert_eq!(f.origin, vec![-1.0, -1.0]);
        assert!(f.values.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn boundary_csv_has_documented_columns() {
    let dir = out_dir("csv");
    let mut cfg = preset("flat-line").unwrap();
    cfg.grid.h = 0.125;
    cfg.output = dir.path().to_path_buf();
    run(&cfg, &[Stage::Geometry, Stage::Lattice, Stage::Whitney], DumpFormat::Text).unwrap();
    let head = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(head("boundary.csv"), "x1,x2,x3,sigma_weight");
    assert_eq!(head("lattice.csv"), "cube_id,k,c1,c2,c3,r_q,parent_id,sigma_mass");
    assert_eq!(head("whitney_boxes.csv"), "box_id,k,lo1,lo2,lo3,side,dist_to_gamma");
}
