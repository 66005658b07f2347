//! Run configuration, scenario presets and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{BoundarySet, GammaSpec};
use crate::solver::{BoundaryBins, Grid, OperatorPreset, System, Walls};

/// Boundary set description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub ambient_dim: usize,
    pub boundary_dim: usize,
    pub gamma: GammaSpec,
    /// Parameter ranges sampled for flat sets and graphs.
    #[serde(default)]
    pub footprint: Vec<(f64, f64)>,
    /// Sample spacing as a fraction of the grid spacing.
    #[serde(default = "default_spacing_factor")]
    pub spacing_factor: f64,
}

fn default_spacing_factor() -> f64 {
    0.25
}

/// Cell-centred grid over an axis box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default = "default_r_abs")]
    pub r_abs_factor: f64,
}

fn default_r_abs() -> f64 {
    1.0
}

impl GridSpec {
    pub fn cube(n: usize, half: f64, h: f64) -> Self {
        GridSpec { h, lo: vec![-half; n], hi: vec![half; n], r_abs_factor: 1.0 }
    }

    pub fn refined(&self) -> Self {
        GridSpec { h: 0.5 * self.h, ..self.clone() }
    }
}

/// Experiments selectable from a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Structure,
    Ainfty,
    GoodLambda,
    SLessN {
        #[serde(default = "default_draws")]
        draws: usize,
    },
    BmoCarleson {
        #[serde(default = "default_draws")]
        draws: usize,
    },
    CarlesonAinfty,
}

fn default_draws() -> usize {
    10
}

/// Everything a batch run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub grid: GridSpec,
    #[serde(default = "default_operator")]
    pub operator: OperatorPreset,
    #[serde(default = "default_walls")]
    pub walls: Walls,
    #[serde(default)]
    pub experiments: Vec<ExperimentSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub dump_fields: bool,
}

fn default_operator() -> OperatorPreset {
    OperatorPreset::PureWeight
}

fn default_walls() -> Walls {
    Walls::Reflecting
}

fn default_output() -> PathBuf {
    PathBuf::from("codimlab-out")
}

impl ScenarioSpec {
    /// Samples Γ at `spacing_factor · h`.
    pub fn build(&self, h: f64) -> Result<BoundarySet> {
        BoundarySet::build(self.ambient_dim, self.boundary_dim, &self.gamma, &self.footprint, self.spacing_factor * h)
    }
}

/// Γ, grid, assembled system and boundary bins for one resolution.
#[derive(Debug)]
pub struct Scene {
    pub gamma: BoundarySet,
    pub system: System,
    pub bins: BoundaryBins,
}

impl Scene {
    pub fn build(scenario: &ScenarioSpec, grid: &GridSpec, operator: OperatorPreset, walls: Walls) -> Result<Self> {
        let gamma = scenario.build(grid.h)?;
        let g = Grid::new(&gamma, &grid.lo, &grid.hi, grid.h, grid.r_abs_factor)?;
        let system = System::assemble(&gamma, g, operator, walls)?;
        let bins = BoundaryBins::new(&gamma, &system.grid)?;
        Ok(Scene { gamma, system, bins })
    }
}

impl RunConfig {
    /// Lists every violation at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let s = &self.scenario;
        let n = s.ambient_dim;
        if !(2..=crate::geometry::MAX_DIM).contains(&n) {
            problems.push(format!("ambient_dim {n} outside 2..={}", crate::geometry::MAX_DIM));
        }
        if s.boundary_dim + 1 >= n {
            problems.push("codimension ≥ 2 required".to_string());
        }
        if !(s.spacing_factor > 0.0 && s.spacing_factor <= 1.0) {
            problems.push("spacing_factor must lie in (0, 1]".to_string());
        }
        let needs_footprint = matches!(s.gamma, GammaSpec::Flat { .. } | GammaSpec::LipschitzGraph { .. });
        if needs_footprint && s.footprint.len() != s.boundary_dim {
            problems.push(format!("footprint needs {} ranges, got {}", s.boundary_dim, s.footprint.len()));
        }
        let g = &self.grid;
        if !(g.h > 0.0) {
            problems.push("grid.h must be positive".to_string());
        }
        if g.lo.len() != n || g.hi.len() != n {
            problems.push("grid box dimension differs from ambient_dim".to_string());
        } else if g.h > 0.0 {
            for a in 0..n {
                let m = (g.hi[a] - g.lo[a]) / g.h;
                if m < 4.0 || (m - m.round()).abs() > 1e-6 {
                    problems.push(format!("grid axis {a}: side must be ≥ 4 cells and a multiple of h"));
                }
            }
            let cells: f64 = (0..n).map(|a| ((g.hi[a] - g.lo[a]) / g.h).max(0.0)).product();
            if cells > 4.0e7 {
                problems.push(format!("grid has {cells:.0} cells; limit is 4e7"));
            }
        }
        if self.seed > i64::MAX as u64 {
            problems.push(format!("seed must be at most {} to fit a config file", i64::MAX));
        }
        if g.r_abs_factor <= 0.0 {
            problems.push("r_abs_factor must be positive".to_string());
        }
        if let OperatorPreset::Regularized { alpha } = self.operator {
            if alpha <= 0.0 {
                problems.push("regularized operator needs alpha > 0".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(LabError::Config(problems.join("; ")))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| LabError::Config(e.to_string()))
    }
}

/// Named preset.
#[derive(Clone, Debug, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub config: RunConfig,
}

fn base(scenario: ScenarioSpec, grid: GridSpec) -> RunConfig {
    RunConfig {
        scenario,
        grid,
        operator: OperatorPreset::PureWeight,
        walls: Walls::Reflecting,
        experiments: Vec::new(),
        seed: 0,
        output: default_output(),
        dump_fields: false,
    }
}

/// Straight line through the origin along the first axis of R^n, spanning the box.
pub fn flat_line(n: usize, half: f64) -> ScenarioSpec {
    ScenarioSpec {
        name: "flat-line".into(),
        ambient_dim: n,
        boundary_dim: 1,
        gamma: GammaSpec::Flat { bounded: true },
        footprint: vec![(-half, half)],
        spacing_factor: default_spacing_factor(),
    }
}

/// Sine graph t ↦ (t, (L/f) sin(f t), 0) in R³.
pub fn lipschitz_graph(lipschitz: f64, frequency: f64, half: f64) -> ScenarioSpec {
    ScenarioSpec {
        name: "lipschitz-graph".into(),
        ambient_dim: 3,
        boundary_dim: 1,
        gamma: GammaSpec::LipschitzGraph { lipschitz, frequency },
        footprint: vec![(-half, half)],
        spacing_factor: default_spacing_factor(),
    }
}

/// The origin in R².
pub fn single_point() -> ScenarioSpec {
    ScenarioSpec {
        name: "point".into(),
        ambient_dim: 2,
        boundary_dim: 0,
        gamma: GammaSpec::PointCloud { points: vec![vec![0.0, 0.0]], total_measure: Some(1.0) },
        footprint: Vec::new(),
        spacing_factor: default_spacing_factor(),
    }
}

/// Preset catalogue.
pub fn presets() -> Vec<Preset> {
    let mut line = base(flat_line(3, 1.0), GridSpec::cube(3, 1.0, 1.0 / 32.0));
    line.experiments = vec![
        ExperimentSpec::Structure,
        ExperimentSpec::Ainfty,
        ExperimentSpec::GoodLambda,
        ExperimentSpec::SLessN { draws: 10 },
        ExperimentSpec::BmoCarleson { draws: 10 },
        ExperimentSpec::CarlesonAinfty,
    ];
    let point = base(single_point(), GridSpec::cube(2, 1.0, 1.0 / 32.0));
    let mut sine = base(lipschitz_graph(0.1, 2.0 * std::f64::consts::PI, 1.0), GridSpec::cube(3, 1.0, 1.0 / 32.0));
    sine.experiments = vec![ExperimentSpec::Structure];
    let rough = base(lipschitz_graph(2.0, 4.0 * std::f64::consts::PI, 1.0), GridSpec::cube(3, 1.0, 1.0 / 32.0));
    let poly = base(
        ScenarioSpec {
            name: "polyline".into(),
            ambient_dim: 3,
            boundary_dim: 1,
            gamma: GammaSpec::Polyline {
                vertices: vec![vec![-1.0, -0.25, 0.0], vec![0.0, 0.25, 0.0], vec![1.0, -0.25, 0.0]],
            },
            footprint: Vec::new(),
            spacing_factor: default_spacing_factor(),
        },
        GridSpec::cube(3, 1.0, 1.0 / 32.0),
    );
    vec![
        Preset { name: "flat-line", summary: "x-axis in R³ (n=3, d=1), pure-weight operator", config: line },
        Preset { name: "point", summary: "origin in R² (n=2, d=0)", config: point },
        Preset { name: "lipschitz-graph", summary: "sine graph in R³ with Lipschitz constant 0.1", config: sine },
        Preset { name: "rough-graph", summary: "sine graph with Lipschitz constant 2 (exploratory)", config: rough },
        Preset { name: "polyline", summary: "two-segment polyline in R³ with one corner", config: poly },
    ]
}

pub fn preset(name: &str) -> Result<RunConfig> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .map(|p| p.config)
        .ok_or_else(|| LabError::Config(format!("unknown preset {name}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_and_validate() {
        assert!(presets().len() >= 5);
        for p in presets() {
            let text = p.config.to_toml().unwrap();
            let back = RunConfig::from_toml(&text).unwrap();
            assert_eq!(back, p.config, "{}", p.name);
            p.config.validate().unwrap();
        }
    }

    #[test]
    fn rejects_codimension_one() {
        let mut cfg = preset("flat-line").unwrap();
        cfg.scenario.boundary_dim = 2;
        cfg.grid.h = -1.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("codimension ≥ 2 required") && err.contains("grid.h"), "{err}");
    }
}
