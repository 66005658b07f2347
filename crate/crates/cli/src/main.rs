use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use codimlab::config::{presets, preset, ExperimentSpec, RunConfig};
use codimlab::io::DumpFormat;
use codimlab::pipeline::{error_code, run, Stage};
use codimlab::solver::{OperatorPreset, Walls};
use codimlab::LabError;

/// Degenerate elliptic lab: geometry, solver and harmonic-analysis experiments.
#[derive(Parser)]
#[command(name = "codimlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample Γ and write boundary.csv.
    Geometry(RunArgs),
    /// Build the dyadic lattice and check its properties.
    Lattice(RunArgs),
    /// Whitney decomposition of the grid box and its census.
    Whitney(RunArgs),
    /// Solve the Dirichlet problem with seeded smooth data.
    Solve(RunArgs),
    /// Harmonic measure from the corkscrew pole.
    Measure(RunArgs),
    /// Square function and non-tangential maximal function near the anchor.
    Functionals(RunArgs),
    /// Run the selected experiments at the resolution pair (h, h/2).
    Verify(RunArgs),
    /// Every stage in order.
    All(RunArgs),
    /// Print the preset catalogue.
    ListScenarios {
        /// Print each preset as a config file.
        #[arg(long)]
        full: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Config file (TOML).
    #[arg(short, long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset; see `list-scenarios`.
    #[arg(short, long)]
    preset: Option<String>,
    /// Grid spacing.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    walls: Option<WallsArg>,
    #[arg(long, value_enum)]
    operator: Option<OperatorArg>,
    /// α for the regularized operator.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    r_abs_factor: Option<f64>,
    /// Write solution and Green fields.
    #[arg(long)]
    dump_fields: bool,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Experiments for `verify` and `all`, replacing the config list.
    #[arg(long, value_enum, value_delimiter = ',')]
    experiment: Vec<ExperimentArg>,
    /// Draws for the randomized experiments.
    #[arg(long, default_value_t = 10)]
    draws: usize,
    /// Override any config key, e.g. `--set grid.h=0.0625` or `--set scenario.spacing_factor=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WallsArg {
    Reflecting,
    Dirichlet,
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorArg {
    PureWeight,
    Regularized,
    Anisotropic,
    Identity,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Raw,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ExperimentArg {
    Structure,
    Ainfty,
    GoodLambda,
    SLessN,
    BmoCarleson,
    CarlesonAinfty,
}

fn set_key(root: &mut toml::Value, key: &str, raw: &str) -> Result<(), LabError> {
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| LabError::Config(format!("`{key}`: `{part}` is not a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(LabError::Config(format!("empty key in `--set {key}`")))
}

fn load(args: &RunArgs) -> Result<RunConfig, LabError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => RunConfig::from_toml(&std::fs::read_to_string(path)?)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(LabError::Config("pass --config <file> or --preset <name>".into())),
    };
    if !args.sets.is_empty() {
        let mut tree = toml::Value::try_from(&cfg).map_err(|e| LabError::Config(e.to_string()))?;
        for s in &args.sets {
            let (k, v) = s.split_once('=').ok_or_else(|| LabError::Config(format!("`--set {s}` needs KEY=VALUE")))?;
            set_key(&mut tree, k.trim(), v.trim())?;
        }
        cfg = tree.try_into().map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?;
    }
    if let Some(h) = args.h {
        cfg.grid.h = h;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.output {
        cfg.output = o.clone();
    }
    if let Some(r) = args.r_abs_factor {
        cfg.grid.r_abs_factor = r;
    }
    if let Some(w) = args.walls {
        cfg.walls = match w {
            WallsArg::Reflecting => Walls::Reflecting,
            WallsArg::Dirichlet => Walls::Dirichlet,
        };
    }
    if let Some(op) = args.operator {
        cfg.operator = match op {
            OperatorArg::PureWeight => OperatorPreset::PureWeight,
            OperatorArg::Regularized => OperatorPreset::Regularized { alpha: args.alpha },
            OperatorArg::Anisotropic => OperatorPreset::Anisotropic,
            OperatorArg::Identity => OperatorPreset::Identity,
        };
    }
    cfg.dump_fields |= args.dump_fields;
    if !args.experiment.is_empty() {
        cfg.experiments = args
            .experiment
            .iter()
            .map(|e| match e {
                ExperimentArg::Structure => ExperimentSpec::Structure,
                ExperimentArg::Ainfty => ExperimentSpec::Ainfty,
                ExperimentArg::GoodLambda => ExperimentSpec::GoodLambda,
                ExperimentArg::SLessN => ExperimentSpec::SLessN { draws: args.draws },
                ExperimentArg::BmoCarleson => ExperimentSpec::BmoCarleson { draws: args.draws },
                ExperimentArg::CarlesonAinfty => ExperimentSpec::CarlesonAinfty,
            })
            .collect();
    }
    Ok(cfg)
}

fn configure_workers() -> Result<(), LabError> {
    if let Ok(v) = std::env::var("CODIMLAB_WORKERS") {
        let n: usize = v.trim().parse().map_err(|_| LabError::Config(format!("CODIMLAB_WORKERS={v} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| LabError::Config(e.to_string()))?;
    }
    Ok(())
}

fn execute(args: &RunArgs, stages: &[Stage]) -> Result<i32, LabError> {
    let cfg = load(args)?;
    let format = match args.format {
        FormatArg::Text => DumpFormat::Text,
        FormatArg::Raw => DumpFormat::Raw,
    };
    let start = Instant::now();
    let summary = run(&cfg, stages, format)?;
    print!("{}", summary.lines());
    eprintln!("output in {} ({:.1} s)", cfg.output.display(), start.elapsed().as_secs_f64());
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::ListScenarios { full } => {
            for p in presets() {
                let c = &p.config;
                println!(
                    "{:<16} n={} d={}  {}",
                    p.name, c.scenario.ambient_dim, c.scenario.boundary_dim, p.summary
                );
                if *full {
                    match c.to_toml() {
                        Ok(t) => println!("{t}"),
                        Err(e) => eprintln!("error: {e}"),
                    }
                }
            }
            Ok(0)
        }
        Command::Geometry(a) => execute(a, &[Stage::Geometry]),
        Command::Lattice(a) => execute(a, &[Stage::Lattice]),
        Command::Whitney(a) => execute(a, &[Stage::Whitney]),
        Command::Solve(a) => execute(a, &[Stage::Solve]),
        Command::Measure(a) => execute(a, &[Stage::Measure]),
        Command::Functionals(a) => execute(a, &[Stage::Functionals]),
        Command::Verify(a) => execute(a, &[Stage::Verify]),
        Command::All(a) => execute(a, &Stage::ALL),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e) as u8)
        }
    }
}
