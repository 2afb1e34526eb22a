//! Problem and sweep files: TOML with sections `[chart]`, `[morse]`,
//! `[boundary]`, `[strip]`, `[solver]` and an optional `[sweep]`.
//!
//! ```toml
//! [chart]
//! kind = "flat"
//! dim = 1
//!
//! [morse]
//! amp = [0.1]
//!
//! [boundary]
//! eps = 0.1
//!
//! [strip]
//! r = 20.0
//! ns = 800
//! nt = 40
//! x_minus = [0.2]
//! ```

use crate::adiabatic_lab::{CompareMode, SweepConfig};
use crate::geometry::{GeometryError, MetricChart, MorseData, Pt};
use crate::strip_solver::{AdiabaticData, EndCondition, Formulation, NewtonOptions, StripError, StripProblem};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Strip(#[from] StripError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub kind: String,
    pub dim: usize,
    #[serde(default)]
    pub amp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseSpec {
    #[serde(default = "cosine_wells")]
    pub kind: String,
    pub amp: Vec<f64>,
    #[serde(default)]
    pub k: Vec<f64>,
    #[serde(default)]
    pub phase: Vec<f64>,
}

fn cosine_wells() -> String {
    "cosine-wells".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub eps: f64,
    /// Constant closed one-form 𝔞.
    #[serde(default)]
    pub a_form: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndKind {
    Dirichlet,
    FloerSeeded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripSpec {
    pub r: f64,
    pub ns: usize,
    pub nt: usize,
    pub x_minus: Vec<f64>,
    #[serde(default = "dirichlet")]
    pub end: EndKind,
    #[serde(default)]
    pub perturb: f64,
    #[serde(default = "direct")]
    pub formulation: Formulation,
}

fn dirichlet() -> EndKind {
    EndKind::Dirichlet
}

fn direct() -> Formulation {
    Formulation::Direct
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "res_tol")]
    pub res_tol: f64,
    #[serde(default = "max_iter")]
    pub max_iter: usize,
    #[serde(default = "steps")]
    pub continuation_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn res_tol() -> f64 {
    1e-9
}
fn max_iter() -> usize {
    50
}
fn steps() -> usize {
    8
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { res_tol: res_tol(), max_iter: max_iter(), continuation_steps: steps(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub eps: Vec<f64>,
    pub ell: f64,
    #[serde(default = "h_s")]
    pub h_s: f64,
    #[serde(default = "sweep_nt")]
    pub nt: usize,
    #[serde(default = "finite")]
    pub mode: CompareMode,
}

fn h_s() -> f64 {
    0.05
}
fn sweep_nt() -> usize {
    20
}
fn finite() -> CompareMode {
    CompareMode::FiniteFlow
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub chart: ChartSpec,
    pub morse: MorseSpec,
    pub boundary: BoundarySpec,
    pub strip: StripSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.chars().rev().take_while(|c| *c != '\n').count() + 1;
    (line, column)
}

fn point(v: &[f64], dim: usize, name: &str) -> Result<Pt, ConfigError> {
    if v.len() != dim {
        return Err(ConfigError::Invalid(format!("{name} needs {dim} entries, got {}", v.len())));
    }
    let mut p = Pt::zeros();
    p.as_mut_slice()[..dim].copy_from_slice(v);
    Ok(p)
}

impl ProblemConfig {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
            ConfigError::Parse { path: path.into(), line, column, message: e.message().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    pub fn chart(&self) -> Result<MetricChart, ConfigError> {
        let c = &self.chart;
        Ok(match c.kind.as_str() {
            "flat" => MetricChart::flat(c.dim)?,
            "conformal-1d" if c.dim == 1 => MetricChart::conformal_1d(c.amp.unwrap_or(0.2))?,
            "diag-perturbed-2d" if c.dim == 2 => MetricChart::diag_perturbed_2d(c.amp.unwrap_or(0.1))?,
            other => return Err(ConfigError::Invalid(format!("unknown chart `{other}` in dimension {}", c.dim))),
        })
    }

    pub fn morse(&self) -> Result<MorseData, ConfigError> {
        let m = &self.morse;
        if m.kind != "cosine-wells" {
            return Err(ConfigError::Invalid(format!("unknown Morse function `{}`", m.kind)));
        }
        Ok(MorseData::cosine_wells(self.chart.dim, &m.amp, &m.k, &m.phase)?)
    }

    pub fn problem(&self) -> Result<StripProblem, ConfigError> {
        let dim = self.chart.dim;
        let chart = self.chart()?;
        let f = self.morse()?;
        let a = if self.boundary.a_form.is_empty() {
            Pt::zeros()
        } else {
            point(&self.boundary.a_form, dim, "a_form")?
        };
        let bc = AdiabaticData::new(a, f, self.boundary.eps)?;
        let s = &self.strip;
        let x_minus = point(&s.x_minus, dim, "x_minus")?;
        let end = match s.end {
            EndKind::Dirichlet => EndCondition::Dirichlet { x_minus },
            EndKind::FloerSeeded => EndCondition::FloerSeeded { x_minus, perturb: s.perturb },
        };
        // validates the grid
        crate::strip_solver::StripField::new(dim, s.r, s.ns, s.nt)?;
        Ok(StripProblem { chart, bc, r: s.r, ns: s.ns, nt: s.nt, end, formulation: s.formulation })
    }

    pub fn newton(&self, tol_override: Option<f64>) -> NewtonOptions {
        NewtonOptions {
            res_tol: tol_override.unwrap_or(self.solver.res_tol),
            max_iter: self.solver.max_iter,
            ..NewtonOptions::default()
        }
    }

    pub fn sweep(&self, tol_override: Option<f64>, seed: Option<u64>) -> Result<SweepConfig, ConfigError> {
        let sw = self.sweep.as_ref().ok_or_else(|| ConfigError::Invalid("missing [sweep] section".into()))?;
        let cfg = SweepConfig {
            eps_ladder: sw.eps.clone(),
            ell: sw.ell,
            h_s: sw.h_s,
            nt: sw.nt,
            problem: self.problem()?,
            mode: sw.mode,
            opts: self.newton(tol_override),
            continuation_steps: self.solver.continuation_steps,
            seed: seed.unwrap_or(self.solver.seed),
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}
