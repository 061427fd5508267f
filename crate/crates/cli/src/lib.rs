//! Command-line front end for `wavemorse`: reads a JSON run configuration,
//! dispatches one command and writes a canonical JSON report plus optional
//! `x,t,u` grid CSVs.

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use wavemorse::fourier::TruncationSpec;
use wavemorse::index::{relative_morse_index, spectral_flow};
use wavemorse::operator::{box_eigenvalue, box_levels, gap_report, wave_operator};
use wavemorse::wave::{solve_wave, Condition, ExampleName, WaveProblem};

use config::{Command, LoadedConfig, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Refused(wavemorse::Error),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<wavemorse::Error> for CliError {
    fn from(e: wavemorse::Error) -> Self {
        use wavemorse::Error as E;
        match e {
            E::HypothesisFailure { .. } => CliError::Refused(e),
            E::InvalidSpec(_)
            | E::InvalidArgument(_)
            | E::MissingParameters(_)
            | E::MissingComparisonField(_)
            | E::ShapeMismatch { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl CliError {
    /// 1 for configuration errors, 2 for hypothesis refusal, 3 for numerical
    /// failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Refused(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

/// Command-line settings that override the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub force: bool,
}

/// Report text and CSV files of one run, not yet written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: String,
    pub csv: Vec<(String, String)>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u64,
    generator: String,
    command: &'a str,
    config_sha256: &'a str,
    seed: u64,
    force: bool,
    truncation: Option<TruncationSpec>,
    result: Value,
}

fn encode<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Numerical(format!("cannot encode result: {e}")))
}

/// Conditions checked when the configuration lists none.
pub fn default_conditions(name: &str) -> Vec<Condition> {
    match name.parse::<ExampleName>() {
        Ok(ExampleName::ExThm41) | Ok(ExampleName::Linear) => vec![Condition::F1, Condition::F2],
        Ok(ExampleName::ExThm42Plus) | Ok(ExampleName::ExThm42Minus) => {
            vec![Condition::F1, Condition::F2pm]
        }
        Ok(ExampleName::ExThm43) => vec![
            Condition::F1,
            Condition::F3plus,
            Condition::F4plus,
        ],
        Err(_) => vec![Condition::F1],
    }
}

fn spectrum(cfg: &RunConfig, spec: &TruncationSpec) -> Result<Value, CliError> {
    let mut table = Vec::new();
    for j in 1..=spec.j_max {
        for k in 0..=spec.k_max {
            table.push(json!({"j": j, "k": k, "lambda": box_eigenvalue(spec, j, k)}));
        }
    }
    let mut result = json!({"box_eigenvalues": table, "levels": box_levels(spec)});
    if let Some(b) = cfg.shift(spec)? {
        let a = wave_operator(spec)?.shifted(-b);
        result["b"] = json!(b);
        result["gap_report"] = if b != 0.0 {
            encode(&gap_report(&a, -b.abs(), b.abs())?)?
        } else {
            Value::Null
        };
    }
    Ok(result)
}

fn comparison_fields(problem: &WaveProblem, requested: Option<&[String]>) -> Vec<String> {
    match requested {
        Some(list) => list.to_vec(),
        None => ["g0", "g1", "g2", "g3", "g_inf"]
            .into_iter()
            .filter(|f| problem.nonlinearity.comparison_field(f).is_ok())
            .map(String::from)
            .collect(),
    }
}

fn index(cfg: &RunConfig) -> Result<Value, CliError> {
    if let Some((a, b)) = cfg.matrices()? {
        return Ok(json!({"index_pair": encode(&relative_morse_index(&a, &b)?)?}));
    }
    let problem = cfg.wave_problem(true)?;
    let mut pairs = serde_json::Map::new();
    for field in comparison_fields(&problem, cfg.fields.as_deref()) {
        pairs.insert(field.clone(), encode(&problem.field_index(&field)?)?);
    }
    Ok(json!({"index_pairs": pairs}))
}

fn flow(cfg: &RunConfig) -> Result<Value, CliError> {
    let f = &cfg.flow;
    let (a, b) = match cfg.matrices()? {
        Some(pair) => pair,
        None => {
            let problem = cfg.wave_problem(true)?;
            (problem.a.clone(), problem.field_operator(&f.field)?)
        }
    };
    let result = spectral_flow(&a, &b, f.t0, f.t1, f.steps)?;
    Ok(json!({
        "interval": [f.t0, f.t1],
        "flow": encode(&result)?,
        "field": if cfg.matrices.is_some() { Value::Null } else { json!(f.field) },
    }))
}

fn check(cfg: &RunConfig, seed: u64) -> Result<Value, CliError> {
    let problem = cfg.wave_problem(true)?;
    let which = match cfg.conditions()? {
        Some(list) => list,
        None => default_conditions(&problem.nonlinearity.name),
    };
    let reports = problem.check_hypotheses(&which, &cfg.check_options(seed))?;
    let holds = reports.iter().all(|r| r.holds);
    Ok(json!({"all_hold": holds, "reports": encode(&reports)?}))
}

fn solve(cfg: &RunConfig, seed: u64, force: bool) -> Result<(Value, Vec<(String, String)>), CliError> {
    let problem = cfg.wave_problem(force)?;
    let method = cfg.method()?;
    let solution = solve_wave(&problem, method, &cfg.solve_options(seed, force))?;
    let csv = solution
        .solutions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let rows = problem.grid_rows(&s.point.z_vector());
            (format!("solution_{i}.csv"), report::grid_csv(&rows))
        })
        .collect();
    let result = json!({
        "l": problem.reduced.l(),
        "dim_h0": problem.reduced.dim_h0(),
        "lipschitz_claimed": problem.nonlinearity.lipschitz_claimed,
        "solution": encode(&solution)?,
    });
    Ok((result, csv))
}

/// Execute a loaded configuration without touching the file system.
pub fn execute(loaded: &LoadedConfig, overrides: &Overrides) -> Result<RunOutput, CliError> {
    let cfg = &loaded.config;
    let seed = overrides.seed.unwrap_or(cfg.seed);
    let force = overrides.force || cfg.force;
    let spec = cfg.spec()?;
    let mut csv = Vec::new();
    let result = match cfg.command {
        Command::Spectrum => spectrum(cfg, spec.as_ref().expect("validated"))?,
        Command::Index => index(cfg)?,
        Command::Flow => flow(cfg)?,
        Command::Check => check(cfg, seed)?,
        Command::Solve => {
            let (result, files) = solve(cfg, seed, force)?;
            csv = files;
            result
        }
    };
    let envelope = Envelope {
        schema_version: report::SCHEMA_VERSION,
        generator: format!("wavemorse {}", env!("CARGO_PKG_VERSION")),
        command: cfg.command.as_str(),
        config_sha256: &loaded.sha256,
        seed,
        force,
        truncation: spec,
        result,
    };
    Ok(RunOutput {
        report: report::to_canonical_json(&envelope)?,
        csv,
    })
}

/// Execute a config file and write `report.json` plus grid CSVs into the
/// output directory, which is returned.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<PathBuf, CliError> {
    let loaded = config::load(config_path)?;
    let out = execute(&loaded, overrides)?;
    let dir = overrides
        .output
        .clone()
        .or_else(|| loaded.config.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("report.json"), &out.report)?;
    for (name, body) in &out.csv {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(dir)
}
