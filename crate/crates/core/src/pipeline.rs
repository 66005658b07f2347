//! Batch runner: geometry → lattice → whitney → solve → measure → functionals → verify.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentSpec, RunConfig, Scene};
use crate::dyadic::DyadicLattice;
use crate::error::{LabError, Result};
use crate::functionals::{surface_ball, Cone, FieldFunctionals};
use crate::geometry::BoundarySet;
use crate::io::{boundary_csv, boxes_csv, lattice_csv, DumpFormat, FieldDump};
use crate::linalg::loglog_slope;
use crate::structure::corkscrew;
use crate::verify::{
    ainfty_experiment, bmo_carleson_experiment, carleson_ainfty_experiment, evaluation_samples,
    good_lambda_experiment, s_less_n_experiment, smooth_random_data, structure_experiment, Context, Criterion,
    ExperimentReport,
};
use crate::whitney::WhitneyGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Geometry,
    Lattice,
    Whitney,
    Solve,
    Measure,
    Functionals,
    Verify,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Geometry, Stage::Lattice, Stage::Whitney, Stage::Solve, Stage::Measure, Stage::Functionals, Stage::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Geometry => "geometry",
            Stage::Lattice => "lattice",
            Stage::Whitney => "whitney",
            Stage::Solve => "solve",
            Stage::Measure => "measure",
            Stage::Functionals => "functionals",
            Stage::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Skipped,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub values: BTreeMap<String, f64>,
    pub criteria: Vec<Criterion>,
    pub files: Vec<String>,
    pub message: Option<String>,
    /// Exit code class of the error, when there was one.
    #[serde(skip)]
    pub error_code: Option<i32>,
}

impl StageRecord {
    fn new(stage: Stage) -> Self {
        StageRecord {
            stage,
            status: StageStatus::Ok,
            values: BTreeMap::new(),
            criteria: Vec::new(),
            files: Vec::new(),
            message: None,
            error_code: None,
        }
    }

    fn check(&mut self, name: &str, value: f64, bound: &str, pass: bool) {
        self.criteria.push(Criterion { name: name.into(), value, bound: bound.into(), pass });
    }
}

/// Everything a run produced. Contains no timings, so identical inputs give identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub h: f64,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub experiments: Vec<ExperimentReport>,
}

impl RunSummary {
    pub fn criteria(&self) -> impl Iterator<Item = &Criterion> {
        self.stages.iter().flat_map(|s| s.criteria.iter()).chain(self.experiments.iter().flat_map(|e| e.criteria.iter()))
    }

    pub fn pass(&self) -> bool {
        self.criteria().all(|c| c.pass)
    }

    /// 0 pass, 1 criteria failure, 2 config error, 3 solver or resource error.
    pub fn exit_code(&self) -> i32 {
        if let Some(code) = self.stages.iter().filter_map(|s| s.error_code).max() {
            return code;
        }
        if self.pass() {
            0
        } else {
            1
        }
    }

    pub fn lines(&self) -> String {
        let mut s = String::new();
        for st in &self.stages {
            let status = match st.status {
                StageStatus::Ok => "ok",
                StageStatus::Skipped => "skipped",
                StageStatus::Error => "error",
            };
            s.push_str(&format!("stage {}: {status}", st.stage.name()));
            if let Some(m) = &st.message {
                s.push_str(&format!(" ({m})"));
            }
            s.push('\n');
            for c in &st.criteria {
                s.push_str(&format!(
                    "[{}] {}: {} = {:.6e} (bound {})\n",
                    if c.pass { "PASS" } else { "FAIL" },
                    st.stage.name(),
                    c.name,
                    c.value,
                    c.bound
                ));
            }
        }
        for e in &self.experiments {
            s.push_str(&e.summary());
        }
        s
    }
}

/// Exit code class of an error.
pub fn error_code(e: &LabError) -> i32 {
    match e {
        LabError::Config(_) | LabError::Argument(_) | LabError::Parameter(_) | LabError::Serde(_) => 2,
        _ => 3,
    }
}

struct Shared {
    gamma: Option<BoundarySet>,
    scene: Option<Scene>,
    solution: Option<Vec<f64>>,
}

/// Runs `stages` in pipeline order, writing artifacts under `cfg.output`.
///
/// Only a config that fails validation returns `Err`; a failing stage is recorded and the
/// remaining stages still run and write their reports.
pub fn run(cfg: &RunConfig, stages: &[Stage], format: DumpFormat) -> Result<RunSummary> {
    cfg.validate()?;
    let out = cfg.output.as_path();
    std::fs::create_dir_all(out)?;
    let mut summary = RunSummary {
        scenario: cfg.scenario.name.clone(),
        h: cfg.grid.h,
        seed: cfg.seed,
        stages: Vec::new(),
        experiments: Vec::new(),
    };
    let mut shared = Shared { gamma: None, scene: None, solution: None };
    let mut wanted: Vec<Stage> = stages.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    for stage in wanted {
        let mut rec = StageRecord::new(stage);
        let res = match stage {
            Stage::Geometry => geometry_stage(cfg, &mut shared, &mut rec, out),
            Stage::Lattice => lattice_stage(cfg, &mut shared, &mut rec, out),
            Stage::Whitney => whitney_stage(cfg, &mut shared, &mut rec, out),
            Stage::Solve => solve_stage(cfg, &mut shared, &mut rec, out, format),
            Stage::Measure => measure_stage(cfg, &mut shared, &mut rec, out, format),
            Stage::Functionals => functionals_stage(cfg, &mut shared, &mut rec, out),
            Stage::Verify => verify_stage(cfg, &mut rec, &mut summary.experiments, out),
        };
        if let Err(e) = res {
            rec.status = StageStatus::Error;
            rec.error_code = Some(error_code(&e));
            rec.message = Some(e.to_string());
        }
        summary.stages.push(rec);
    }
    std::fs::write(out.join("run.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn gamma<'a>(cfg: &RunConfig, shared: &'a mut Shared) -> Result<&'a BoundarySet> {
    if shared.gamma.is_none() {
        shared.gamma = Some(cfg.scenario.build(cfg.grid.h)?);
    }
    Ok(shared.gamma.as_ref().unwrap())
}

fn scene<'a>(cfg: &RunConfig, shared: &'a mut Shared) -> Result<&'a Scene> {
    if shared.scene.is_none() {
        shared.scene = Some(Scene::build(&cfg.scenario, &cfg.grid, cfg.operator, cfg.walls)?);
    }
    Ok(shared.scene.as_ref().unwrap())
}

fn context(cfg: &RunConfig) -> Context {
    Context::new(cfg.scenario.clone(), cfg.grid.clone(), cfg.operator, cfg.seed)
}

fn write(out: &Path, rec: &mut StageRecord, name: &str, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(out.join(name), body)?;
    rec.files.push(name.to_string());
    Ok(())
}

fn dump(out: &Path, rec: &mut StageRecord, stem: &str, field: &FieldDump, format: DumpFormat) -> Result<()> {
    let name = match format {
        DumpFormat::Text => format!("{stem}.txt"),
        DumpFormat::Raw => format!("{stem}.bin"),
    };
    field.write(&out.join(&name), format)?;
    rec.files.push(name);
    Ok(())
}

fn geometry_stage(cfg: &RunConfig, shared: &mut Shared, rec: &mut StageRecord, out: &Path) -> Result<()> {
    let ctx = context(cfg);
    let g = gamma(cfg, shared)?;
    write(out, rec, "boundary.csv", boundary_csv(g))?;
    let q = ctx.anchor(g);
    let r0 = ctx.roi();
    let radii: Vec<f64> = (0..3).map(|k| r0 * 0.5f64.powi(k)).collect();
    let masses: Vec<f64> = radii.iter().map(|&r| g.ball_mass(&q, r)).collect();
    rec.values.insert("samples".into(), g.len() as f64);
    rec.values.insert("total_mass".into(), g.total_mass());
    rec.values.insert("ahlfors_constant".into(), g.ahlfors_constant());
    rec.values.insert("spacing".into(), g.spacing());
    let d = g.boundary_dim() as f64;
    if radii[radii.len() - 1] >= 2.0 * g.spacing() || d == 0.0 {
        let slope = loglog_slope(&radii, &masses);
        rec.values.insert("ahlfors_slope".into(), slope);
        rec.check("σ(Δ(q, r)) slope", slope, &format!("{d} ± 0.1"), (slope - d).abs() <= 0.1);
    }
    Ok(())
}

/// Finest generation the sample spacing resolves, capped by the grid spacing.
fn lattice_levels(g: &BoundarySet, h: f64) -> (i32, i32) {
    let finest = if g.boundary_dim() == 0 { h } else { 16.0 * g.spacing() };
    (0, (-finest.log2()).floor().max(1.0) as i32)
}

fn lattice_stage(cfg: &RunConfig, shared: &mut Shared, rec: &mut StageRecord, out: &Path) -> Result<()> {
    let g = gamma(cfg, shared)?;
    let (k0, k1) = lattice_levels(g, cfg.grid.h);
    let lat = DyadicLattice::build(g, k0, k1)?;
    let check = lat.check(g);
    write(out, rec, "lattice.csv", lattice_csv(&lat, g.ambient_dim()))?;
    write(out, rec, "lattice.json", serde_json::to_string_pretty(&check)?)?;
    rec.values.insert("cubes".into(), lat.cubes.len() as f64);
    rec.values.insert("k_min".into(), k0 as f64);
    rec.values.insert("k_max".into(), k1 as f64);
    rec.values.insert("a0".into(), lat.a0);
    rec.values.insert("a1".into(), lat.a1);
    rec.values.insert("small_boundary_gamma".into(), lat.gamma);
    let failures = check.cover_failures
        + check.nesting_failures
        + check.ancestor_failures
        + check.diameter_failures
        + check.inner_ball_failures
        + check.outer_ball_failures;
    rec.check("cube property failures", failures as f64, "= 0", check.all_pass());
    Ok(())
}

fn whitney_stage(cfg: &RunConfig, shared: &mut Shared, rec: &mut StageRecord, out: &Path) -> Result<()> {
    let g = gamma(cfg, shared)?;
    let grid = &cfg.grid;
    let n = grid.lo.len();
    let center: Vec<f64> = (0..n).map(|a| 0.5 * (grid.lo[a] + grid.hi[a])).collect();
    let side = (0..n).map(|a| grid.hi[a] - grid.lo[a]).fold(0.0, f64::max);
    let k0 = -(side.log2().ceil() as i32);
    // Two levels below the solver grid.
    let levels = (2f64.powi(-k0) / (0.25 * grid.h)).log2().ceil().max(1.0) as u32;
    let w = WhitneyGrid::centered(&center, k0, levels)?;
    let dec = w.decompose(g, &grid.lo, &grid.hi);
    let census = w.census(g, &dec.boxes);
    write(out, rec, "whitney_boxes.csv", boxes_csv(&w, g, &dec.boxes))?;
    write(out, rec, "whitney.json", serde_json::to_string_pretty(&census)?)?;
    rec.values.insert("boxes".into(), dec.boxes.len() as f64);
    rec.values.insert("residual_volume".into(), dec.residual_volume);
    rec.values.insert("region_volume".into(), dec.region_volume);
    rec.values.insert("max_touching_ratio".into(), census.max_touching_ratio);
    let bad = census.lower_failures + census.upper_failures + census.ratio_failures;
    rec.check("Whitney inequality failures", bad as f64, "= 0", census.whitney_pass());
    let bad = census.dilation_failures + census.half_box_failures;
    rec.check("dilation failures", bad as f64, "= 0", census.dilation_pass());
    Ok(())
}

fn solve_stage(cfg: &RunConfig, shared: &mut Shared, rec: &mut StageRecord, out: &Path, format: DumpFormat) -> Result<()> {
    let ctx = context(cfg);
    let sc = scene(cfg, shared)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let period = 4.0 * ctx.roi();
    let f = smooth_random_data(&sc.gamma, &mut rng, 4, period);
    let sol = sc.system.solve_with(&f, |_| 0.0)?;
    rec.values.insert("iterations".into(), sol.stats.iterations as f64);
    rec.values.insert("relative_residual".into(), sol.stats.relative_residual);
    rec.values.insert("data_min".into(), sol.data_min);
    rec.values.insert("data_max".into(), sol.data_max);
    let g = &sc.system.grid;
    let json = serde_json::json!({
        "scenario": cfg.scenario.name,
        "h": g.h,
        "residual": sol.stats.relative_residual,
        "iters": sol.stats.iterations,
        "unknowns": sc.system.unknowns(),
    });
    write(out, rec, "solve.json", serde_json::to_string_pretty(&json)?)?;
    if cfg.dump_fields {
        let field = FieldDump::new(g.dims.clone(), g.h, g.lo.clone(), sol.values.clone())?;
        dump(out, rec, "field_u", &field, format)?;
    }
    shared.solution = Some(sol.values);
    Ok(())
}

fn measure_stage(cfg: &RunConfig, shared: &mut Shared, rec: &mut StageRecord, out: &Path, format: DumpFormat) -> Result<()> {
    let ctx = context(cfg);
    let sc = scene(cfg, shared)?;
    let q = ctx.anchor(&sc.gamma);
    let pole = corkscrew(&q, ctx.roi());
    let green = sc.system.green(&pole)?;
    let row = sc.system.measure_from_green(&green);
    let total: f64 = row.mass.iter().sum();
    let min = row.mass.iter().cloned().fold(f64::INFINITY, f64::min);
    rec.values.insert("total".into(), total);
    rec.values.insert("raw_defect".into(), row.raw_defect);
    rec.values.insert("raw_min".into(), row.raw_min);
    rec.values.insert("iterations".into(), row.stats.iterations as f64);
    if sc.system.walls == crate::solver::Walls::Reflecting {
        rec.check("|ω(Γ) − 1|", (total - 1.0).abs(), "≤ 1e-12", (total - 1.0).abs() <= 1e-12);
    }
    rec.check("min ω(cell)", min, "≥ 0", min >= 0.0);
    let mass = sc.bins.sample_mass(&sc.gamma, &row);
    let density = sc.bins.density(&row);
    let n = sc.gamma.ambient_dim();
    let mut csv: Vec<String> = vec!["sample".into()];
    csv.extend((1..=n).map(|i| format!("x{i}")));
    csv.extend(["omega".into(), "density".into()]);
    let mut text = csv.join(",") + "\n";
    for (i, x) in sc.gamma.samples().iter().enumerate() {
        text.push_str(&format!("{i},"));
        for v in x {
            text.push_str(&format!("{v:.12e},"));
        }
        text.push_str(&format!("{:.12e},{:.12e}\n", mass[i], density[sc.bins.sample_bin[i]]));
    }
    write(out, rec, "measure.csv", text)?;
    if cfg.dump_fields {
        let g = &sc.system.grid;
        let field = FieldDump::new(g.dims.clone(), g.h, g.lo.clone(), green.values.clone())?;
        dump(out, rec, "field_green", &field, format)?;
    }
    Ok(())
}

fn functionals_stage(cfg: &RunConfig, shared: &mut Shared, rec: &mut StageRecord, out: &Path) -> Result<()> {
    let ctx = context(cfg);
    if shared.solution.is_none() {
        let sc = scene(cfg, shared)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let f = smooth_random_data(&sc.gamma, &mut rng, 4, 4.0 * ctx.roi());
        shared.solution = Some(sc.system.solve_with(&f, |_| 0.0)?.values);
    }
    let sc = shared.scene.as_ref().unwrap();
    let u = shared.solution.as_ref().unwrap();
    let field = FieldFunctionals::new(&sc.gamma, &sc.system, u);
    let q = ctx.anchor(&sc.gamma);
    let r = ctx.roi();
    let mut at = evaluation_samples(&sc.gamma, &q, r, 32);
    if at.is_empty() {
        at = surface_ball(&sc.gamma, &q, r);
    }
    let rows: Vec<(usize, f64, f64)> = at
        .par_iter()
        .map(|&i| {
            let x = sc.gamma.sample(i);
            (i, field.square_function(&Cone::new(x, 1.0, Some(2.0 * r))), field.nontangential_max(&Cone::new(x, 1.0, Some(2.0 * r))))
        })
        .collect();
    let mut text = String::from("sample,square_function,nontangential_max\n");
    for (i, s, n) in &rows {
        text.push_str(&format!("{i},{s:.12e},{n:.12e}\n"));
    }
    write(out, rec, "functionals.csv", text)?;
    let ratio = rows.iter().filter(|r| r.2 > 0.0).map(|r| r.1.sqrt() / r.2).fold(0.0, f64::max);
    let carleson = field.carleson_mass(&q, r) / r.powi(sc.gamma.boundary_dim() as i32);
    rec.values.insert("max_sqrt_s_over_n".into(), ratio);
    rec.values.insert("carleson_mass_normalized".into(), carleson);
    rec.values.insert("points".into(), rows.len() as f64);
    Ok(())
}

fn verify_stage(cfg: &RunConfig, rec: &mut StageRecord, reports: &mut Vec<ExperimentReport>, out: &Path) -> Result<()> {
    if cfg.experiments.is_empty() {
        rec.status = StageStatus::Skipped;
        rec.message = Some("no experiments selected".into());
        return Ok(());
    }
    let ctx = context(cfg);
    let dir = out.join("experiments");
    for spec in &cfg.experiments {
        let report = match spec {
            ExperimentSpec::Structure => structure_experiment(&ctx).map(|r| r.0),
            ExperimentSpec::Ainfty => ainfty_experiment(&ctx),
            ExperimentSpec::GoodLambda => good_lambda_experiment(&ctx),
            ExperimentSpec::SLessN { draws } => s_less_n_experiment(&ctx, *draws),
            ExperimentSpec::BmoCarleson { draws } => bmo_carleson_experiment(&ctx, *draws),
            ExperimentSpec::CarlesonAinfty => carleson_ainfty_experiment(&ctx),
        };
        // Reports of completed experiments stay on disk when a later one fails.
        let report = report?;
        report.write(&dir)?;
        rec.files.push(format!("experiments/{}.json", report.experiment));
        reports.push(report);
    }
    Ok(())
}
