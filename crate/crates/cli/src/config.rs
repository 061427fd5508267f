//! Run configuration: one JSON file describes one run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use wavemorse::fourier::TruncationSpec;
use wavemorse::operator::TruncatedOperator;
use wavemorse::reduction::{HomotopyOptions, RegularizationOptions, SearchOptions, Strategy};
use wavemorse::wave::{
    example_nonlinearity, CheckOptions, Condition, ExampleName, Method, Nonlinearity,
    SolveOptions, WaveOptions, WaveProblem,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectrum,
    Index,
    Flow,
    Solve,
    Check,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Index => "index",
            Command::Flow => "flow",
            Command::Solve => "solve",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub p: u32,
    pub q: u32,
    #[serde(rename = "J")]
    pub j_max: usize,
    #[serde(rename = "K")]
    pub k_max: usize,
    #[serde(rename = "Nx")]
    pub nx: Option<usize>,
    #[serde(rename = "Nt")]
    pub nt: Option<usize>,
    pub b: Option<f64>,
    /// Split threshold; chosen automatically when absent.
    pub l: Option<f64>,
    pub nonlinearity: Option<NonlinearityConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixPair {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "one")]
    pub t1: f64,
    #[serde(default = "default_flow_steps")]
    pub steps: usize,
    /// Comparison field used as B in problem mode.
    #[serde(default = "default_flow_field")]
    pub field: String,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t1: 1.0,
            steps: default_flow_steps(),
            field: default_flow_field(),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_flow_steps() -> usize {
    64
}

fn default_flow_field() -> String {
    "g2".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub strategy: Option<Strategy>,
    pub budget: Option<usize>,
    pub starts: Option<usize>,
    pub radius: Option<f64>,
    pub grad_tol: Option<f64>,
    pub dedup_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub lipschitz_samples: Option<usize>,
    pub sweep_min: Option<i32>,
    pub sweep_max: Option<i32>,
    pub c3_floor: Option<f64>,
    pub m2: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationConfig {
    pub eps: Option<Vec<f64>>,
    pub kernel_ceiling: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomotopyConfig {
    pub steps: Option<usize>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub force: bool,
    pub problem: Option<ProblemConfig>,
    pub matrices: Option<MatrixPair>,
    pub method: Option<String>,
    pub conditions: Option<Vec<String>>,
    /// Comparison fields reported by `index` in problem mode.
    pub fields: Option<Vec<String>>,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub regularization: RegularizationConfig,
    #[serde(default)]
    pub homotopy: HomotopyConfig,
}

/// A parsed configuration with the hash of its raw bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&bytes)
}

pub fn parse(bytes: &[u8]) -> Result<LoadedConfig, CliError> {
    let config: RunConfig =
        serde_json::from_slice(bytes).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    let sha256 = hex::encode(Sha256::digest(bytes));
    config.validate()?;
    Ok(LoadedConfig { config, sha256 })
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<TruncatedOperator, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("matrix `{name}` must be square and non-empty")));
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    TruncatedOperator::from_matrix(m).map_err(|e| CliError::Config(format!("matrix `{name}`: {e}")))
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        match self.command {
            Command::Spectrum | Command::Solve | Command::Check => {
                if self.problem.is_none() {
                    return Err(CliError::Config(format!(
                        "`{}` needs a `problem` section",
                        self.command.as_str()
                    )));
                }
            }
            Command::Index | Command::Flow => {
                if self.problem.is_some() == self.matrices.is_some() {
                    return Err(CliError::Config(format!(
                        "`{}` needs exactly one of `problem` or `matrices`",
                        self.command.as_str()
                    )));
                }
            }
        }
        let needs_nl = matches!(self.command, Command::Solve | Command::Check)
            || (matches!(self.command, Command::Index | Command::Flow) && self.problem.is_some());
        if needs_nl && self.problem.as_ref().is_some_and(|p| p.nonlinearity.is_none()) {
            return Err(CliError::Config(format!(
                "`{}` needs `problem.nonlinearity`",
                self.command.as_str()
            )));
        }
        if self.command == Command::Solve {
            self.method()?;
        }
        self.conditions()?;
        Ok(())
    }

    pub fn spec(&self) -> Result<Option<TruncationSpec>, CliError> {
        let Some(p) = &self.problem else { return Ok(None) };
        let nx = p.nx.unwrap_or(4 * p.j_max);
        let nt = p.nt.unwrap_or(4 * p.k_max + 4);
        Ok(Some(TruncationSpec::new(p.p, p.q, p.j_max, p.k_max, nx, nt)?))
    }

    pub fn matrices(&self) -> Result<Option<(TruncatedOperator, TruncatedOperator)>, CliError> {
        let Some(m) = &self.matrices else { return Ok(None) };
        let a = matrix(&m.a, "a")?;
        let b = matrix(&m.b, "b")?;
        if a.dim() != b.dim() {
            return Err(CliError::Config("matrices `a` and `b` differ in size".into()));
        }
        Ok(Some((a, b)))
    }

    /// The example nonlinearity, with `problem.b` merged into its parameters.
    pub fn nonlinearity(&self, spec: &TruncationSpec) -> Result<Option<Nonlinearity>, CliError> {
        let Some(problem) = &self.problem else { return Ok(None) };
        let Some(cfg) = &problem.nonlinearity else { return Ok(None) };
        let name: ExampleName = cfg.name.parse()?;
        let mut params = cfg.params.clone();
        if let Some(b) = problem.b {
            match params.get("b") {
                Some(&pb) if pb != b => {
                    return Err(CliError::Config(format!(
                        "problem.b = {b} disagrees with nonlinearity parameter b = {pb}"
                    )))
                }
                _ if name != ExampleName::ExThm43 => {
                    params.insert("b".into(), b);
                }
                _ => {}
            }
        }
        let nl = example_nonlinearity(name, &params, spec)?;
        if let Some(b) = problem.b {
            if nl.b != b {
                return Err(CliError::Config(format!(
                    "problem.b = {b} disagrees with the derived shift b = {}",
                    nl.b
                )));
            }
        }
        Ok(Some(nl))
    }

    /// Shift b from the problem section or the nonlinearity.
    pub fn shift(&self, spec: &TruncationSpec) -> Result<Option<f64>, CliError> {
        if let Some(nl) = self.nonlinearity(spec)? {
            return Ok(Some(nl.b));
        }
        Ok(self.problem.as_ref().and_then(|p| p.b))
    }

    pub fn wave_problem(&self, force: bool) -> Result<WaveProblem, CliError> {
        let spec = self.spec()?.ok_or_else(|| CliError::Config("missing `problem`".into()))?;
        let nl = self
            .nonlinearity(&spec)?
            .ok_or_else(|| CliError::Config("missing `problem.nonlinearity`".into()))?;
        let l = self.problem.as_ref().and_then(|p| p.l);
        Ok(WaveProblem::new(spec, nl, WaveOptions { l, force })?)
    }

    pub fn method(&self) -> Result<Method, CliError> {
        Ok(self
            .method
            .as_deref()
            .unwrap_or("reduce_direct")
            .parse::<Method>()?)
    }

    pub fn conditions(&self) -> Result<Option<Vec<Condition>>, CliError> {
        match &self.conditions {
            None => Ok(None),
            Some(list) => Ok(Some(
                list.iter()
                    .map(|c| c.parse::<Condition>())
                    .collect::<Result<_, _>>()?,
            )),
        }
    }

    pub fn search_options(&self, seed: u64) -> SearchOptions {
        let d = SearchOptions::default();
        let s = &self.search;
        SearchOptions {
            strategy: s.strategy.unwrap_or(d.strategy),
            budget: s.budget.unwrap_or(d.budget),
            seed,
            starts: s.starts.unwrap_or(d.starts),
            radius: s.radius.unwrap_or(d.radius),
            grad_tol: s.grad_tol.unwrap_or(d.grad_tol),
            dedup_tol: s.dedup_tol.unwrap_or(d.dedup_tol),
            ..d
        }
    }

    pub fn check_options(&self, seed: u64) -> CheckOptions {
        let d = CheckOptions::default();
        let c = &self.check;
        CheckOptions {
            seed,
            lipschitz_samples: c.lipschitz_samples.unwrap_or(d.lipschitz_samples),
            sweep_exponents: (
                c.sweep_min.unwrap_or(d.sweep_exponents.0),
                c.sweep_max.unwrap_or(d.sweep_exponents.1),
            ),
            c3_floor: c.c3_floor.unwrap_or(d.c3_floor),
            m2: c.m2.unwrap_or(d.m2),
            ..d
        }
    }

    pub fn solve_options(&self, seed: u64, force: bool) -> SolveOptions {
        let search = self.search_options(seed);
        let reg_default = RegularizationOptions::default();
        let hom_default = HomotopyOptions::default();
        SolveOptions {
            search: search.clone(),
            homotopy: HomotopyOptions {
                steps: self.homotopy.steps.unwrap_or(hom_default.steps),
                radius: self.homotopy.radius.unwrap_or(hom_default.radius),
                search: search.clone(),
                ..hom_default
            },
            regularization: RegularizationOptions {
                eps: self.regularization.eps.clone().unwrap_or(reg_default.eps.clone()),
                kernel_ceiling: self
                    .regularization
                    .kernel_ceiling
                    .unwrap_or(reg_default.kernel_ceiling),
                search,
                ..reg_default
            },
            check: self.check_options(seed),
            force,
        }
    }
}
